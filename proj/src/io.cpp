#include "egat/io.hpp"

#include "egat/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace egat {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

// ============================ text file helpers =============================

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

// ========================== TSPLIB / CVRPLIB ================================

namespace {

struct LibFile {
    std::map<std::string, std::string> fields;
    std::map<std::string, std::vector<std::string>> sections;
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool is_section_header(const std::string& word) {
    return word.size() > 7 && word.substr(word.size() - 7) == "SECTION";
}

LibFile split_lib_file(const std::string& text) {
    LibFile out;
    std::istringstream in(text);
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (line == "EOF") break;
        if (line == "-1" && !section.empty()) {
            out.sections[section].push_back(line);
            continue;
        }
        const std::size_t colon = line.find(':');
        std::string head = trim(colon == std::string::npos ? line : line.substr(0, colon));
        if (is_section_header(head)) {
            section = head;
            out.sections[section];  // may legally be empty until filled
            continue;
        }
        if (colon != std::string::npos && section.empty()) {
            out.fields[head] = trim(line.substr(colon + 1));
            continue;
        }
        if (!section.empty()) {
            out.sections[section].push_back(line);
            continue;
        }
        throw IoError("tsplib: stray line '" + line + "'");
    }
    return out;
}

std::string field_or(const LibFile& f, const std::string& key, const std::string& fallback = "") {
    auto it = f.fields.find(key);
    return it == f.fields.end() ? fallback : it->second;
}

std::string need_field(const LibFile& f, const std::string& key) {
    auto it = f.fields.find(key);
    if (it == f.fields.end()) throw IoError("tsplib: missing field " + key);
    return it->second;
}

std::vector<std::array<real, 2>> parse_coords(const LibFile& f, int dimension) {
    auto it = f.sections.find("NODE_COORD_SECTION");
    if (it == f.sections.end()) throw IoError("tsplib: missing NODE_COORD_SECTION");
    std::vector<std::array<real, 2>> coords(static_cast<std::size_t>(dimension));
    std::vector<bool> seen(static_cast<std::size_t>(dimension), false);
    int count = 0;
    for (const auto& line : it->second) {
        std::istringstream ls(line);
        int id;
        real x, y;
        if (!(ls >> id >> x >> y)) throw IoError("tsplib: malformed coord line '" + line + "'");
        if (id < 1 || id > dimension)
            throw IoError("tsplib: node id " + std::to_string(id) + " outside DIMENSION");
        coords[static_cast<std::size_t>(id - 1)] = {x, y};
        if (seen[static_cast<std::size_t>(id - 1)])
            throw IoError("tsplib: duplicate node id " + std::to_string(id));
        seen[static_cast<std::size_t>(id - 1)] = true;
        ++count;
    }
    if (count != dimension)
        throw IoError("tsplib: DIMENSION is " + std::to_string(dimension) + " but " +
                      std::to_string(count) + " coordinates were given");
    return coords;
}

}  // namespace

Instance parse_tsplib(const std::string& text) {
    LibFile f = split_lib_file(text);
    const std::string ewt = field_or(f, "EDGE_WEIGHT_TYPE", "EUC_2D");
    if (ewt != "EUC_2D") throw IoError("tsplib: unsupported EDGE_WEIGHT_TYPE " + ewt);
    const int dimension = std::stoi(need_field(f, "DIMENSION"));
    if (dimension < 2) throw IoError("tsplib: DIMENSION must be >= 2");

    Instance inst;
    inst.kind = Problem::Tsp;
    inst.id = field_or(f, "NAME", "unnamed");
    inst.coords = parse_coords(f, dimension);
    return inst.finalize();
}

Instance parse_cvrplib(const std::string& text) {
    LibFile f = split_lib_file(text);
    const std::string ewt = field_or(f, "EDGE_WEIGHT_TYPE", "EUC_2D");
    if (ewt != "EUC_2D") throw IoError("cvrplib: unsupported EDGE_WEIGHT_TYPE " + ewt);
    const int dimension = std::stoi(need_field(f, "DIMENSION"));
    const real capacity = std::stod(need_field(f, "CAPACITY"));
    if (capacity <= 0.0) throw IoError("cvrplib: CAPACITY must be positive");

    auto coords = parse_coords(f, dimension);

    auto dit = f.sections.find("DEMAND_SECTION");
    if (dit == f.sections.end()) throw IoError("cvrplib: missing DEMAND_SECTION");
    std::vector<real> demands(static_cast<std::size_t>(dimension), -1.0);
    for (const auto& line : dit->second) {
        std::istringstream ls(line);
        int id;
        real d;
        if (!(ls >> id >> d)) throw IoError("cvrplib: malformed demand line '" + line + "'");
        if (id < 1 || id > dimension) throw IoError("cvrplib: demand id outside DIMENSION");
        demands[static_cast<std::size_t>(id - 1)] = d;
    }
    for (real d : demands)
        if (d < 0.0) throw IoError("cvrplib: demand missing for some node");

    auto pit = f.sections.find("DEPOT_SECTION");
    if (pit == f.sections.end()) throw IoError("cvrplib: missing DEPOT_SECTION");
    int depot = -1;
    for (const auto& line : pit->second) {
        const int id = std::stoi(line);
        if (id == -1) break;
        if (depot != -1) throw IoError("cvrplib: multiple depots are not supported");
        depot = id - 1;
    }
    if (depot < 0 || depot >= dimension) throw IoError("cvrplib: missing or bad depot id");
    if (demands[static_cast<std::size_t>(depot)] != 0.0)
        throw IoError("cvrplib: depot demand must be zero");
    for (int i = 0; i < dimension; ++i) {
        if (i == depot) continue;
        if (demands[static_cast<std::size_t>(i)] > capacity)
            throw IoError("cvrplib: customer demand exceeds vehicle capacity");
    }

    Instance inst;
    inst.kind = Problem::Cvrp;
    inst.id = field_or(f, "NAME", "unnamed");
    inst.capacity = capacity;
    inst.coords.push_back(coords[static_cast<std::size_t>(depot)]);
    inst.demands.push_back(0.0);
    for (int i = 0; i < dimension; ++i) {
        if (i == depot) continue;
        inst.coords.push_back(coords[static_cast<std::size_t>(i)]);
        inst.demands.push_back(demands[static_cast<std::size_t>(i)]);
    }
    return inst.finalize();
}

namespace {

std::string format_number(real v) { return json(v).dump(); }

}  // namespace

std::string write_tsplib(const Instance& inst) {
    if (inst.kind != Problem::Tsp) throw Error("write_tsplib: TSP instance required");
    std::ostringstream out;
    out << "NAME : " << (inst.id.empty() ? "unnamed" : inst.id) << "\n";
    out << "TYPE : TSP\n";
    out << "DIMENSION : " << inst.num_nodes() << "\n";
    out << "EDGE_WEIGHT_TYPE : EUC_2D\n";
    out << "NODE_COORD_SECTION\n";
    for (int i = 0; i < inst.num_nodes(); ++i)
        out << (i + 1) << " " << format_number(inst.coords[static_cast<std::size_t>(i)][0]) << " "
            << format_number(inst.coords[static_cast<std::size_t>(i)][1]) << "\n";
    out << "EOF\n";
    return out.str();
}

std::string write_cvrplib(const Instance& inst) {
    if (inst.kind != Problem::Cvrp) throw Error("write_cvrplib: CVRP instance required");
    std::ostringstream out;
    out << "NAME : " << (inst.id.empty() ? "unnamed" : inst.id) << "\n";
    out << "TYPE : CVRP\n";
    out << "DIMENSION : " << inst.num_nodes() << "\n";
    out << "EDGE_WEIGHT_TYPE : EUC_2D\n";
    out << "CAPACITY : " << format_number(inst.capacity) << "\n";
    out << "NODE_COORD_SECTION\n";
    for (int i = 0; i < inst.num_nodes(); ++i)
        out << (i + 1) << " " << format_number(inst.coords[static_cast<std::size_t>(i)][0]) << " "
            << format_number(inst.coords[static_cast<std::size_t>(i)][1]) << "\n";
    out << "DEMAND_SECTION\n";
    for (int i = 0; i < inst.num_nodes(); ++i)
        out << (i + 1) << " " << format_number(inst.demands[static_cast<std::size_t>(i)]) << "\n";
    out << "DEPOT_SECTION\n1\n-1\n";
    out << "EOF\n";
    return out.str();
}

Instance parse_routing_file(const std::string& path) {
    const std::string text = read_text_file(path);
    LibFile f = split_lib_file(text);
    const std::string type = field_or(f, "TYPE", "TSP");
    if (type == "CVRP") return parse_cvrplib(text);
    if (type == "TSP") return parse_tsplib(text);
    throw IoError("unsupported problem TYPE " + type);
}

real nearest_trained_capacity(int customers) {
    const int sizes[3] = {20, 50, 100};
    const real caps[3] = {3.0, 4.0, 5.0};
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(customers - sizes[i]) < std::abs(customers - sizes[best])) best = i;
    return caps[best];
}

ModelView model_view(const Instance& original, real trained_capacity) {
    real minx = original.coords[0][0], miny = original.coords[0][1];
    real maxx = minx, maxy = miny;
    for (const auto& c : original.coords) {
        minx = std::min(minx, c[0]);
        maxx = std::max(maxx, c[0]);
        miny = std::min(miny, c[1]);
        maxy = std::max(maxy, c[1]);
    }
    const real extent = std::max(maxx - minx, maxy - miny);
    const real scale = extent > 0.0 ? extent : 1.0;

    ModelView view;
    view.coord_scale = scale;
    view.inst.kind = original.kind;
    view.inst.id = original.id;
    view.inst.coords.reserve(original.coords.size());
    for (const auto& c : original.coords)
        view.inst.coords.push_back({(c[0] - minx) / scale, (c[1] - miny) / scale});
    if (original.kind == Problem::Cvrp) {
        const real trained =
            trained_capacity > 0.0 ? trained_capacity : nearest_trained_capacity(original.num_customers());
        view.inst.capacity = trained;
        view.inst.demands.reserve(original.demands.size());
        for (real d : original.demands)
            view.inst.demands.push_back(d / original.capacity * trained);
    }
    view.inst.finalize();
    return view;
}

real rounded_length(const Instance& original, const std::vector<int>& seq) {
    validate_solution(original, seq);
    auto nint_dist = [&](int i, int j) {
        const real dx = original.coords[static_cast<std::size_t>(i)][0] -
                        original.coords[static_cast<std::size_t>(j)][0];
        const real dy = original.coords[static_cast<std::size_t>(i)][1] -
                        original.coords[static_cast<std::size_t>(j)][1];
        return std::floor(std::sqrt(dx * dx + dy * dy) + 0.5);
    };
    real len = 0.0;
    if (original.kind == Problem::Tsp) {
        for (std::size_t t = 0; t + 1 < seq.size(); ++t) len += nint_dist(seq[t], seq[t + 1]);
        len += nint_dist(seq.back(), seq.front());
        return len;
    }
    int prev = 0;
    for (int node : seq) {
        len += nint_dist(prev, node);
        prev = node;
    }
    len += nint_dist(prev, 0);
    return len;
}

std::optional<real> known_optimum(const std::string& name) {
    static const std::map<std::string, real> table = {
        // TSPLIB, exact-solver column
        {"eil51", 426}, {"berlin52", 7542}, {"st70", 675}, {"eil76", 538}, {"pr76", 108159},
        {"rat99", 1211}, {"kroA100", 21282}, {"kroB100", 22141}, {"kroC100", 20749},
        {"kroD100", 21294}, {"kroE100", 22068}, {"rd100", 7910}, {"eil101", 629},
        {"lin105", 14379}, {"pr107", 44303}, {"pr124", 59030}, {"bier127", 118282},
        {"ch130", 6110}, {"pr136", 96772}, {"pr144", 58537}, {"ch150", 6528},
        {"kroA150", 26524}, {"kroB150", 26130}, {"pr152", 73682}, {"u159", 42080},
        // CVRPLIB optima
        {"A-n32-k5", 784}, {"A-n36-k5", 799}, {"A-n37-k5", 669}, {"A-n38-k5", 730},
        {"A-n39-k5", 822}, {"A-n44-k6", 937}, {"A-n45-k6", 944}, {"A-n46-k7", 914},
        {"A-n48-k7", 1073}, {"B-n34-k5", 788}, {"B-n35-k5", 955}, {"B-n45-k6", 678},
        {"B-n50-k7", 741}, {"B-n51-k7", 1032}, {"B-n52-k7", 747}, {"B-n56-k7", 707},
        {"B-n57-k9", 1598}, {"E-n30-k3", 534}, {"E-n51-k5", 521}, {"P-n50-k8", 631},
        {"P-n51-k10", 741}, {"P-n55-k10", 694}, {"P-n60-k10", 744}, {"P-n65-k10", 792},
        {"P-n70-k10", 827},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

// =============================== checkpoints ================================

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xffffffffu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

namespace {

json config_to_json(const ModelConfig& cfg) {
    return json{{"node_dim", cfg.node_dim},     {"edge_dim", cfg.edge_dim},
                {"layers", cfg.layers},         {"heads", cfg.heads},
                {"logit_clip", cfg.logit_clip}, {"problem", problem_name(cfg.problem)},
                {"residual", cfg.residual}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.node_dim = j.at("node_dim").get<int>();
    cfg.edge_dim = j.at("edge_dim").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.logit_clip = j.at("logit_clip").get<real>();
    cfg.problem = problem_from_name(j.at("problem").get<std::string>());
    cfg.residual = j.at("residual").get<bool>();
    return cfg;
}

constexpr char kMagic[4] = {'E', 'G', 'C', 'P'};

template <class T>
void put_raw(std::string& buf, const T& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    json header;
    header["config"] = config_to_json(cp.config);
    header["meta"] = cp.meta;
    json tensors = json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : cp.params.tensors) {
        tensors.push_back(json{{"name", name},
                               {"shape", t.shape},
                               {"offset", offset},
                               {"count", t.size()},
                               {"requires_grad", t.requires_grad}});
        offset += t.size();
    }
    header["tensors"] = std::move(tensors);
    const std::string head = header.dump();

    std::string buf;
    buf.append(kMagic, 4);
    put_raw(buf, kCheckpointVersion);
    put_raw(buf, static_cast<std::uint64_t>(head.size()));
    buf += head;
    for (const auto& [name, t] : cp.params.tensors)
        buf.append(reinterpret_cast<const char*>(t.data.data()), t.size() * sizeof(real));
    const std::uint32_t crc = crc32(buf.data(), buf.size());
    put_raw(buf, crc);
    write_text_file(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string buf = read_text_file(path);
    if (buf.size() < 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t) + sizeof(std::uint32_t))
        throw IoError("checkpoint: file too short");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw IoError("checkpoint: bad magic");

    const std::size_t body_len = buf.size() - sizeof(std::uint32_t);
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + body_len, sizeof(stored_crc));
    if (crc32(buf.data(), body_len) != stored_crc)
        throw IoError("checkpoint: checksum failure (truncated or corrupted file)");

    std::size_t pos = 4;
    std::uint32_t version;
    std::memcpy(&version, buf.data() + pos, sizeof(version));
    pos += sizeof(version);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    std::uint64_t head_len;
    std::memcpy(&head_len, buf.data() + pos, sizeof(head_len));
    pos += sizeof(head_len);
    if (pos + head_len > body_len) throw IoError("checkpoint: header overruns file");

    const json header = json::parse(buf.substr(pos, head_len));
    pos += head_len;

    Checkpoint cp;
    cp.config = config_from_json(header.at("config"));
    cp.meta = header.at("meta").get<std::map<std::string, std::string>>();
    const std::size_t payload_start = pos;
    for (const auto& tj : header.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        const std::vector<int> shape = tj.at("shape").get<std::vector<int>>();
        const std::size_t offset = tj.at("offset").get<std::size_t>();
        const std::size_t count = tj.at("count").get<std::size_t>();
        if (Tensor::numel(shape) != count) throw IoError("checkpoint: tensor size mismatch");
        const std::size_t byte_off = payload_start + offset * sizeof(real);
        if (byte_off + count * sizeof(real) > body_len)
            throw IoError("checkpoint: tensor payload overruns file");
        Tensor t = Tensor::zeros(shape, tj.at("requires_grad").get<bool>());
        std::memcpy(t.data.data(), buf.data() + byte_off, count * sizeof(real));
        cp.params.insert(name, std::move(t));
    }
    return cp;
}

void check_compatible(const Checkpoint& cp, const ModelConfig& cfg) {
    Rng rng(0);
    const ParamStore skeleton = build_params(cfg, InitKind::Xavier, rng);
    if (skeleton.tensors.size() != cp.params.tensors.size())
        throw Error("checkpoint: tensor-name mismatch against the requested config");
    for (const auto& [name, t] : skeleton.tensors) {
        if (!cp.params.contains(name)) throw Error("checkpoint: missing tensor '" + name + "'");
        if (cp.params.at(name).shape != t.shape)
            throw Error("checkpoint: shape mismatch for '" + name + "' (got " +
                        shape_str(cp.params.at(name).shape) + ", config wants " +
                        shape_str(t.shape) + ")");
    }
}

// ================================= reports ==================================

void Report::finalize() {
    if (rows.empty()) throw Error("report: no rows");
    real gap_sum = 0.0, len_sum = 0.0, sec_sum = 0.0;
    for (auto& r : rows) {
        if (r.reference <= 0.0) throw Error("report: nonpositive reference for " + r.instance);
        r.gap = (r.length - r.reference) / r.reference;
        gap_sum += r.gap;
        len_sum += r.length;
        sec_sum += r.seconds;
    }
    aggregate_gap = gap_sum / static_cast<real>(rows.size());
    mean_length = len_sum / static_cast<real>(rows.size());
    total_seconds = sec_sum;
}

void write_report_csv(const Report& report, const std::string& path,
                      const std::string& config_hash) {
    std::ostringstream out;
    out << "# config_hash=" << config_hash << "\n";
    out << "instance,method,length,reference,gap,seconds\n";
    for (const auto& r : report.rows)
        out << r.instance << "," << r.method << "," << format_number(r.length) << ","
            << format_number(r.reference) << "," << format_number(r.gap) << ","
            << format_number(r.seconds) << "\n";
    out << "AGGREGATE,," << format_number(report.mean_length) << ",,"
        << format_number(report.aggregate_gap) << "," << format_number(report.total_seconds)
        << "\n";
    write_text_file(path, out.str());
}

void write_report_json(const Report& report, const std::string& path,
                       const std::string& config_hash) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        json row{{"instance", r.instance}, {"method", r.method},   {"length", r.length},
                 {"reference", r.reference}, {"gap", r.gap},       {"seconds", r.seconds}};
        for (const auto& [k, v] : r.extra) row[k] = v;
        rows.push_back(std::move(row));
    }
    json doc{{"config_hash", config_hash},
             {"rows", std::move(rows)},
             {"aggregate",
              {{"gap", report.aggregate_gap},
               {"mean_length", report.mean_length},
               {"total_seconds", report.total_seconds}}}};
    write_text_file(path, doc.dump(2) + "\n");
}

Report parse_report_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    Report report;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "instance,method,length,reference,gap,seconds")
                throw IoError("report: unexpected CSV header");
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        while (cells.size() < 6) cells.push_back("");
        if (cells[0] == "AGGREGATE") {
            report.mean_length = std::stod(cells[2]);
            report.aggregate_gap = std::stod(cells[4]);
            report.total_seconds = std::stod(cells[5]);
            continue;
        }
        ReportRow r;
        r.instance = cells[0];
        r.method = cells[1];
        r.length = std::stod(cells[2]);
        r.reference = std::stod(cells[3]);
        r.gap = std::stod(cells[4]);
        r.seconds = std::stod(cells[5]);
        report.rows.push_back(std::move(r));
    }
    if (!header_seen) throw IoError("report: missing CSV header");
    return report;
}

// ================================ datasets ==================================

void save_dataset(const Dataset& ds, const std::string& path) {
    json instances = json::array();
    for (const auto& inst : ds.instances) {
        json coords = json::array();
        for (const auto& c : inst.coords) coords.push_back(json::array({c[0], c[1]}));
        json entry{{"id", inst.id}, {"coords", std::move(coords)}};
        if (inst.kind == Problem::Cvrp) {
            entry["demands"] = inst.demands;
            entry["capacity"] = inst.capacity;
        }
        instances.push_back(std::move(entry));
    }
    json doc{{"manifest",
              {{"kind", problem_name(ds.kind)},
               {"size", ds.size},
               {"count", ds.instances.size()},
               {"seed", ds.seed},
               {"capacity", ds.capacity},
               {"config_hash", ds.config_hash}}},
             {"instances", std::move(instances)}};
    write_text_file(path, doc.dump() + "\n");
}

Dataset load_dataset(const std::string& path) {
    const json doc = json::parse(read_text_file(path));
    const json& man = doc.at("manifest");
    Dataset ds;
    ds.kind = problem_from_name(man.at("kind").get<std::string>());
    ds.size = man.at("size").get<int>();
    ds.seed = man.at("seed").get<std::uint64_t>();
    ds.capacity = man.at("capacity").get<real>();
    ds.config_hash = man.at("config_hash").get<std::string>();
    for (const json& entry : doc.at("instances")) {
        Instance inst;
        inst.kind = ds.kind;
        inst.id = entry.at("id").get<std::string>();
        for (const json& c : entry.at("coords"))
            inst.coords.push_back({c.at(0).get<real>(), c.at(1).get<real>()});
        if (ds.kind == Problem::Cvrp) {
            inst.demands = entry.at("demands").get<std::vector<real>>();
            inst.capacity = entry.at("capacity").get<real>();
        }
        inst.finalize();
        if (inst.num_customers() != ds.size)
            throw IoError("dataset: manifest size mismatch for instance " + inst.id);
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

// ================================== SVG =====================================

namespace {

const char* kRouteColors[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                              "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080"};

}  // namespace

std::string render_svg_string(const Instance& inst, const std::vector<int>& seq,
                              const SvgOptions& opts, const std::string& config_hash) {
    validate_solution(inst, seq);
    real minx = inst.coords[0][0], miny = inst.coords[0][1], maxx = minx, maxy = miny;
    for (const auto& c : inst.coords) {
        minx = std::min(minx, c[0]);
        maxx = std::max(maxx, c[0]);
        miny = std::min(miny, c[1]);
        maxy = std::max(maxy, c[1]);
    }
    const real extent = std::max({maxx - minx, maxy - miny, 1e-9});
    const real margin = 0.05 * extent;
    const real scale = opts.width / (extent + 2 * margin);
    auto px = [&](int i) { return (inst.coords[static_cast<std::size_t>(i)][0] - minx + margin) * scale; };
    auto py = [&](int i) {
        return opts.width - (inst.coords[static_cast<std::size_t>(i)][1] - miny + margin) * scale;
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\""
        << opts.width << "\">\n";
    if (!config_hash.empty()) svg << "<!-- config_hash=" << config_hash << " -->\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    auto line = [&](int a, int b, const char* color) {
        svg << "<line x1=\"" << px(a) << "\" y1=\"" << py(a) << "\" x2=\"" << px(b) << "\" y2=\""
            << py(b) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    };

    if (inst.kind == Problem::Tsp) {
        for (std::size_t t = 0; t + 1 < seq.size(); ++t) line(seq[t], seq[t + 1], "#4363d8");
        line(seq.back(), seq.front(), "#4363d8");
    } else {
        const auto routes = cvrp_routes(seq);
        for (std::size_t r = 0; r < routes.size(); ++r) {
            const char* color = kRouteColors[r % (sizeof(kRouteColors) / sizeof(char*))];
            const auto& route = routes[r];
            if (!opts.omit_depot_legs) line(0, route.front(), color);
            for (std::size_t t = 0; t + 1 < route.size(); ++t) line(route[t], route[t + 1], color);
            if (!opts.omit_depot_legs) line(route.back(), 0, color);
        }
    }

    for (int i = 0; i < inst.num_nodes(); ++i) {
        if (inst.kind == Problem::Cvrp && i == 0) {
            svg << "<rect x=\"" << px(i) - 5 << "\" y=\"" << py(i) - 5
                << "\" width=\"10\" height=\"10\" fill=\"black\"/>\n";
        } else {
            svg << "<circle cx=\"" << px(i) << "\" cy=\"" << py(i)
                << "\" r=\"3\" fill=\"#333333\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void render_svg(const Instance& inst, const std::vector<int>& seq, const std::string& path,
                const SvgOptions& opts, const std::string& config_hash) {
    write_text_file(path, render_svg_string(inst, seq, opts, config_hash));
}

}  // namespace egat
