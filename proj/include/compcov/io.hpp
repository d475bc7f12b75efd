#pragma once

#include <compcov/compositional.hpp>
#include <compcov/error.hpp>
#include <compcov/tensor.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace compcov::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Delimited text

/// Split one delimited line; double-quoted fields may contain the delimiter ("" escapes a quote).
inline std::vector<std::string> split_fields(std::string_view line, char delim)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::string quote_field(const std::string& s, char delim)
{
    if (s.find(delim) == std::string::npos && s.find('"') == std::string::npos &&
        s.find('\n') == std::string::npos) {
        return s;
    }
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    q.push_back('"');
    return q;
}

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Parse a whole field as a finite double; nullopt otherwise.
inline std::optional<double> parse_double(std::string_view s)
{
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    const char* first = t.data();
    if (*first == '+') ++first;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw NumericError("format_double: conversion failed");
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Count tables

struct CountTable {
    std::vector<std::string> variables;
    /// Population labels in order of first appearance.
    std::vector<std::string> populations;
    /// counts[h]: n_h x p raw counts of population h.
    std::vector<Matrix> counts;
};

/**
 * Read a delimited count table: one header row, one row per sample, one
 * numeric column per variable and (optionally) one categorical population
 * column named `label_column`. The delimiter is a tab when the header holds
 * one, a comma otherwise. An empty `label_column` puts all rows in a single
 * population named "all".
 */
inline CountTable parse_count_table(std::istream& in, const std::string& label_column)
{
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("count table: empty input");
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<std::string> header = split_fields(line, delim);
    for (auto& h : header) h = trim(h);

    std::ptrdiff_t label_idx = -1;
    if (!label_column.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == label_column) label_idx = static_cast<std::ptrdiff_t>(c);
        }
        if (label_idx < 0) {
            throw InvalidInput("count table: population column '" + label_column + "' not found in header");
        }
    }

    CountTable table;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<std::ptrdiff_t>(c) != label_idx) table.variables.push_back(header[c]);
    }
    const std::size_t p = table.variables.size();
    if (p < 2) throw InvalidInput("count table: need at least two variable columns");

    std::map<std::string, std::size_t> index_of;
    std::vector<std::vector<std::vector<double>>> rows;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line, delim);
        if (fields.size() != header.size()) {
            throw InvalidInput("count table: row " + std::to_string(row_no) + " has " +
                               std::to_string(fields.size()) + " columns, header has " +
                               std::to_string(header.size()));
        }
        std::string pop = label_idx < 0 ? "all" : trim(fields[static_cast<std::size_t>(label_idx)]);
        if (pop.empty()) {
            throw InvalidInput("count table: row " + std::to_string(row_no) + " has an empty population label");
        }
        std::vector<double> values;
        values.reserve(p);
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (static_cast<std::ptrdiff_t>(c) == label_idx) continue;
            const auto v = parse_double(fields[c]);
            const std::string where = "row " + std::to_string(row_no) + ", column " +
                                      std::to_string(c + 1) + " (" + header[c] + ")";
            if (!v) throw InvalidInput("count table: non-numeric value at " + where);
            if (*v < 0.0) throw InvalidInput("count table: negative count at " + where);
            values.push_back(*v);
        }
        auto [it, inserted] = index_of.try_emplace(pop, table.populations.size());
        if (inserted) {
            table.populations.push_back(pop);
            rows.emplace_back();
        }
        rows[it->second].push_back(std::move(values));
    }
    if (table.populations.empty()) throw InvalidInput("count table: no data rows");

    for (std::size_t h = 0; h < rows.size(); ++h) {
        Matrix m(static_cast<Index>(rows[h].size()), static_cast<Index>(p));
        for (std::size_t i = 0; i < rows[h].size(); ++i) {
            for (std::size_t j = 0; j < p; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[h][i][j];
        }
        table.counts.push_back(std::move(m));
    }
    return table;
}

/// Add `pseudocount` to every count and close each row to the simplex.
inline CompositionDataset to_compositions(const CountTable& table, double pseudocount)
{
    if (!(pseudocount >= 0.0) || !std::isfinite(pseudocount)) {
        throw InvalidInput("pseudocount must be a finite value >= 0");
    }
    std::vector<Matrix> comps;
    for (std::size_t h = 0; h < table.counts.size(); ++h) {
        const Matrix shifted = table.counts[h].array() + pseudocount;
        for (Index i = 0; i < shifted.rows(); ++i) {
            for (Index j = 0; j < shifted.cols(); ++j) {
                if (!(shifted(i, j) > 0.0)) {
                    throw InvalidInput("count table: zero count in population '" + table.populations[h] +
                                       "' sample " + std::to_string(i + 1) + ", variable '" +
                                       table.variables[static_cast<std::size_t>(j)] +
                                       "'; use a positive pseudocount");
                }
            }
        }
        if (shifted.rows() < 2) {
            throw InvalidInput("count table: population '" + table.populations[h] +
                               "' has fewer than 2 samples");
        }
        comps.push_back(close_rows(shifted));
    }
    return CompositionDataset(std::move(comps), table.populations, table.variables);
}

inline CompositionDataset ingest_counts(std::istream& in, const std::string& label_column, double pseudocount)
{
    return to_compositions(parse_count_table(in, label_column), pseudocount);
}

inline CompositionDataset ingest_counts(const std::filesystem::path& path, const std::string& label_column,
                                        double pseudocount)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open count table " + path.string());
    return ingest_counts(in, label_column, pseudocount);
}

// ---------------------------------------------------------------------------
// Matrix files: a header row of variable names, then p rows of p values.

struct LabeledMatrix {
    std::vector<std::string> names;
    Matrix values;
};

inline void write_matrix(std::ostream& out, const Matrix& m, const std::vector<std::string>& names)
{
    if (m.rows() != m.cols() || static_cast<Index>(names.size()) != m.cols()) {
        throw DomainError("write_matrix: need a square matrix and one name per column");
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
        out << (j ? "," : "") << quote_field(names[j], ',');
    }
    out << '\n';
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << '\n';
    }
}

inline LabeledMatrix read_matrix(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("matrix file: empty input");
    LabeledMatrix lm;
    lm.names = split_fields(trim(line), ',');
    const auto p = static_cast<Index>(lm.names.size());
    lm.values.resize(p, p);
    Index row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        if (row >= p) throw InvalidInput("matrix file: more than " + std::to_string(p) + " data rows");
        const auto fields = split_fields(trim(line), ',');
        if (static_cast<Index>(fields.size()) != p) {
            throw InvalidInput("matrix file: row " + std::to_string(row + 2) + " has " +
                               std::to_string(fields.size()) + " values, expected " + std::to_string(p));
        }
        for (Index j = 0; j < p; ++j) {
            const auto v = parse_double(fields[static_cast<std::size_t>(j)]);
            if (!v) {
                throw InvalidInput("matrix file: bad value at row " + std::to_string(row + 2) + ", column " +
                                   std::to_string(j + 1));
            }
            lm.values(row, j) = *v;
        }
        ++row;
    }
    if (row != p) throw InvalidInput("matrix file: expected " + std::to_string(p) + " data rows");
    return lm;
}

inline LabeledMatrix read_matrix(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open matrix file " + path.string());
    return read_matrix(in);
}

// ---------------------------------------------------------------------------
// Network export (Graphviz DOT)

struct NetworkSummary {
    Index nodes = 0;
    int edges = 0;
    int positive = 0;
    int negative = 0;
};

/**
 * Undirected DOT graph of a correlation matrix: one node per variable, one
 * edge per nonzero off-diagonal entry (|r| > threshold). Edges carry sign,
 * the signed correlation, weight = |r|, color (green positive, red negative)
 * and a pen width proportional to |r|.
 */
inline NetworkSummary write_network_dot(std::ostream& out, const Matrix& correlation,
                                        const std::vector<std::string>& names, const std::string& graph_name,
                                        double threshold = 1e-8, double max_width = 6.0)
{
    const Index p = correlation.rows();
    if (correlation.cols() != p || static_cast<Index>(names.size()) != p) {
        throw DomainError("write_network_dot: need a square matrix and one name per variable");
    }
    auto q = [](const std::string& s) {
        std::string r = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') r.push_back('\\');
            r.push_back(c);
        }
        return r + "\"";
    };

    NetworkSummary summary;
    summary.nodes = p;
    out << "graph " << q(graph_name) << " {\n";
    out << "  node [shape=circle];\n";
    for (const auto& n : names) out << "  " << q(n) << ";\n";
    for (Index j = 0; j < p; ++j) {
        for (Index k = j + 1; k < p; ++k) {
            const double r = correlation(j, k);
            if (std::abs(r) <= threshold) continue;
            const bool pos = r > 0.0;
            ++summary.edges;
            ++(pos ? summary.positive : summary.negative);
            out << "  " << q(names[static_cast<std::size_t>(j)]) << " -- "
                << q(names[static_cast<std::size_t>(k)]) << " [sign=\"" << (pos ? "positive" : "negative")
                << "\", correlation=" << format_double(r)
                << ", weight=" << format_double(std::abs(r)) << ", color=\"" << (pos ? "green" : "red")
                << "\", penwidth=" << format_double(max_width * std::abs(r)) << "];\n";
        }
    }
    out << "}\n";
    return summary;
}

} // namespace compcov::io
