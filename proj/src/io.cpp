#include "memsd/io.hpp"

#include "memsd/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace memsd {

namespace fs = std::filesystem;
using nlohmann::json;

Table::Table(std::vector<std::string> names) : columns(std::move(names)), data(columns.size()) {}

void Table::add_row(std::initializer_list<double> values) { add_row(std::vector<double>(values)); }

void Table::add_row(const std::vector<double>& values) {
    if (values.size() != columns.size()) throw ValidationError("table row width does not match the header");
    for (std::size_t c = 0; c < values.size(); ++c) data[c].push_back(values[c]);
}

const std::vector<double>& Table::column(std::string_view name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
        if (columns[c] == name) return data[c];
    throw ValidationError("no column '" + std::string(name) + "'");
}

std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

Format format_from_name(std::string_view name) {
    if (name == "csv") return Format::csv;
    if (name == "json") return Format::json;
    throw ValidationError("unknown format '" + std::string(name) + "' (expected csv or json)");
}

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    return out;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view s, const fs::path& path, std::size_t line) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        // from_chars rejects inf/nan spellings produced by to_chars on some libs
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        if (s == "nan" || s == "-nan") return NAN;
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

}  // namespace

void write_csv(const fs::path& path, const Table& t) {
    auto out = open_out(path);
    std::string text;
    for (std::size_t c = 0; c < t.columns.size(); ++c) text += (c ? "," : "") + t.columns[c];
    text += '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (c) text += ',';
            text += format_double(t.data[c][r]);
        }
        text += '\n';
    }
    out << text;
    if (!out) throw ValidationError("write failed: " + path.string());
}

Table read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.empty()) throw ValidationError(path.string() + ": missing header");
    std::vector<std::string> names;
    for (auto f : split(line)) names.emplace_back(f);
    Table t(names);
    std::size_t n = 1;
    std::vector<double> row;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != names.size())
            throw ValidationError(path.string() + ":" + std::to_string(n) + ": expected " +
                                  std::to_string(names.size()) + " fields");
        row.clear();
        for (auto f : fields) row.push_back(parse_double(f, path, n));
        t.add_row(row);
    }
    return t;
}

json table_to_json(const Table& t) {
    json rows = json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
        json row = json::array();
        for (const auto& col : t.data) row.push_back(col[r]);
        rows.push_back(std::move(row));
    }
    return json{{"columns", t.columns}, {"rows", std::move(rows)}};
}

Table table_from_json(const json& j) {
    if (!j.is_object() || !j.contains("columns") || !j.contains("rows"))
        throw ValidationError("table JSON needs 'columns' and 'rows'");
    Table t(j.at("columns").get<std::vector<std::string>>());
    for (const auto& row : j.at("rows")) t.add_row(row.get<std::vector<double>>());
    return t;
}

fs::path write_table(const fs::path& dir, std::string_view stem, const Table& t, Format format) {
    const fs::path path = dir / (std::string(stem) + (format == Format::csv ? ".csv" : ".json"));
    if (format == Format::csv)
        write_csv(path, t);
    else
        write_json(path, table_to_json(t));
    return path;
}

Table read_table(const fs::path& path) {
    return path.extension() == ".json" ? table_from_json(read_json(path)) : read_csv(path);
}

void write_json(const fs::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw ValidationError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace memsd
