#include "kaelspi/io.hpp"

#include "json_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kaelspi {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

namespace {

std::string quote(const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::runtime_error(path.string() + ": not a number: '" + s + "'");
    }
    return v;
}

int parse_int(const std::string& s, const std::filesystem::path& path) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::runtime_error(path.string() + ": not an integer: '" + s + "'");
    }
    return v;
}

std::filesystem::path sidecar(const std::filesystem::path& p) { return std::filesystem::path(p.string() + ".json"); }

}  // namespace

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary), width_(header.size()) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != width_) {
        throw std::logic_error(path_.string() + ": row width " + std::to_string(fields.size()) + " != header width " +
                               std::to_string(width_));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out_ << ',';
        out_ << quote(fields[i]);
    }
    out_ << "\r\n";
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, std::vector<std::string>* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
    const std::vector<std::string> head = split_line(line);
    if (header != nullptr) *header = head;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto r = split_line(line);
        if (r.size() != head.size()) throw std::runtime_error(path.string() + ": ragged row");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
    const std::size_t d = data.transitions.empty() ? 0 : data.transitions.front().s.size();
    std::vector<std::string> header;
    for (std::size_t i = 0; i < d; ++i) header.push_back("s" + std::to_string(i));
    header.insert(header.end(), {"a", "r"});
    for (std::size_t i = 0; i < d; ++i) header.push_back("s" + std::to_string(i) + "_next");
    header.insert(header.end(), {"a_next", "terminal"});
    CsvWriter csv(path, header);
    for (const Transition& t : data.transitions) {
        std::vector<std::string> f;
        for (double v : t.s) f.push_back(format_double(v));
        f.push_back(std::to_string(t.a));
        f.push_back(format_double(t.r));
        for (double v : t.s_next) f.push_back(format_double(v));
        f.push_back(std::to_string(t.a_next));
        f.push_back(t.terminal ? "1" : "0");
        csv.row(f);
    }
    const Json meta{{"env", data.env_id},           {"seed", data.seed},     {"policy", data.policy},
                    {"episodes", data.episodes},    {"max_steps", data.max_steps},
                    {"state_dim", d},               {"rows", data.size()}};
    std::ofstream out(sidecar(path));
    if (!out) throw std::runtime_error("cannot write " + sidecar(path).string());
    out << meta.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& path) {
    Dataset data;
    std::size_t d = 0;
    {
        std::ifstream in(sidecar(path));
        if (!in) throw std::runtime_error("missing dataset metadata " + sidecar(path).string());
        const Json meta = Json::parse(in);
        data.env_id = meta.at("env").get<std::string>();
        data.seed = meta.at("seed").get<std::uint64_t>();
        data.policy = meta.at("policy").get<std::string>();
        data.episodes = meta.at("episodes").get<int>();
        data.max_steps = meta.at("max_steps").get<int>();
        d = meta.at("state_dim").get<std::size_t>();
    }
    std::vector<std::string> header;
    const auto rows = read_csv(path, &header);
    if (header.size() != 2 * d + 4) throw std::runtime_error(path.string() + ": header does not match state_dim");
    for (const auto& r : rows) {
        Transition t;
        std::size_t c = 0;
        for (std::size_t i = 0; i < d; ++i) t.s.push_back(parse_double(r[c++], path));
        t.a = parse_int(r[c++], path);
        t.r = parse_double(r[c++], path);
        for (std::size_t i = 0; i < d; ++i) t.s_next.push_back(parse_double(r[c++], path));
        t.a_next = parse_int(r[c++], path);
        t.terminal = parse_int(r[c++], path) != 0;
        data.transitions.push_back(std::move(t));
    }
    return data;
}

void write_trace(const PolicyIterTrace& trace, const std::filesystem::path& path) {
    CsvWriter csv(path, {"iteration", "weight_norm", "weight_change", "action_change_rate", "rank", "degenerate",
                         "dictionary_size"});
    for (const IterationRecord& r : trace.iterations) {
        csv.row({std::to_string(r.iteration), format_double(r.weight_norm), format_double(r.weight_change),
                 format_double(r.action_change_rate), std::to_string(r.rank), r.degenerate ? "1" : "0",
                 std::to_string(r.dictionary_size)});
    }
}

void write_policy_trace(const PolicyIterTrace& trace, const std::vector<State>& states, const TablePolicy* optimal,
                        const std::filesystem::path& path) {
    std::vector<std::string> header{"iteration", "state", "action"};
    if (optimal != nullptr) header.push_back("optimal");
    CsvWriter csv(path, header);
    for (const IterationRecord& r : trace.iterations) {
        if (r.policy.size() != states.size()) throw std::logic_error("write_policy_trace: policy/state size mismatch");
        for (std::size_t i = 0; i < states.size(); ++i) {
            std::vector<std::string> f{std::to_string(r.iteration), format_double(states[i].front()),
                                       std::to_string(r.policy[i])};
            if (optimal != nullptr) f.push_back(std::to_string((*optimal)[i]));
            csv.row(f);
        }
    }
}

}  // namespace kaelspi
