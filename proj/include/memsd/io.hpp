#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace memsd {

/// Column-major numeric table with a header row.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data;  // data[c][r]

    Table() = default;
    explicit Table(std::vector<std::string> names);

    std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
    void add_row(std::initializer_list<double> values);
    void add_row(const std::vector<double>& values);
    const std::vector<double>& column(std::string_view name) const;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double x);

enum class Format { csv, json };
Format format_from_name(std::string_view name);

void write_csv(const std::filesystem::path& path, const Table& t);
/// Throws ValidationError on malformed input (ragged rows, bad numbers).
Table read_csv(const std::filesystem::path& path);

/// {"columns": [...], "rows": [[...], ...]}
nlohmann::json table_to_json(const Table& t);
Table table_from_json(const nlohmann::json& j);

/// Writes `stem`.csv or `stem`.json; returns the path written.
std::filesystem::path write_table(const std::filesystem::path& dir, std::string_view stem, const Table& t,
                                  Format format);
Table read_table(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace memsd
