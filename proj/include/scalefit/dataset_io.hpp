#pragma once

// Dataset serialization: CSV with header `source_id,n_params,flop,tokens,loss`
// and a JSON mirror with the same field names.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "scalefit/core.hpp"

namespace scalefit {

inline constexpr std::string_view dataset_csv_header = "source_id,n_params,flop,tokens,loss";

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view text, const std::string& context) {
    text = trim(text);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        fail_input(context + ": cannot parse number '" + std::string(text) + "'");
    return value;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_missing("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail_input("cannot write '" + path + "'");
    out << content;
}

}  // namespace detail

inline Dataset dataset_from_csv(std::string_view text, std::string provenance = {}) {
    Dataset ds;
    ds.provenance = std::move(provenance);
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) fail_input("dataset CSV is empty");
    if (detail::trim(line) != dataset_csv_header)
        fail_input("dataset CSV header must be '" + std::string(dataset_csv_header) + "'");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        const std::string ctx = fmt::format("dataset CSV line {}", line_no);
        if (fields.size() != 5) fail_input(ctx + ": expected 5 fields");
        RunObservation obs;
        obs.source_id = std::string(detail::trim(fields[0]));
        obs.n_params = detail::parse_double(fields[1], ctx);
        obs.flop = detail::parse_double(fields[2], ctx);
        obs.tokens = detail::parse_double(fields[3], ctx);
        obs.loss = detail::parse_double(fields[4], ctx);
        if (!obs.valid()) fail_input(ctx + ": fields must be positive and finite");
        ds.observations.push_back(std::move(obs));
    }
    return ds;
}

inline std::string dataset_to_csv(const Dataset& ds) {
    std::string out(dataset_csv_header);
    out += '\n';
    for (const auto& o : ds.observations) {
        out += fmt::format("{},{},{},{},{}\n", detail::csv_quote(o.source_id), o.n_params, o.flop,
                           o.tokens, o.loss);
    }
    return out;
}

inline nlohmann::json dataset_to_json(const Dataset& ds) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& o : ds.observations) {
        rows.push_back({{"source_id", o.source_id},
                        {"n_params", o.n_params},
                        {"flop", o.flop},
                        {"tokens", o.tokens},
                        {"loss", o.loss}});
    }
    return {{"provenance", ds.provenance}, {"observations", rows}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    Dataset ds;
    try {
        ds.provenance = j.value("provenance", std::string{});
        for (const auto& row : j.at("observations")) {
            RunObservation o{row.at("source_id").get<std::string>(), row.at("n_params").get<double>(),
                             row.at("flop").get<double>(), row.at("tokens").get<double>(),
                             row.at("loss").get<double>()};
            if (!o.valid()) fail_input("dataset JSON: observation '" + o.source_id + "' invalid");
            ds.observations.push_back(std::move(o));
        }
    } catch (const nlohmann::json::exception& ex) {
        fail_input(std::string("dataset JSON: ") + ex.what());
    }
    return ds;
}

/// Loads a dataset from `.json` or CSV (anything else).
inline Dataset load_dataset(const std::string& path) {
    const std::string text = detail::read_file(path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& ex) {
            fail_input("'" + path + "': " + ex.what());
        }
        auto ds = dataset_from_json(j);
        if (ds.provenance.empty()) ds.provenance = path;
        return ds;
    }
    return dataset_from_csv(text, path);
}

inline void save_dataset_csv(const Dataset& ds, const std::string& path) {
    detail::write_file(path, dataset_to_csv(ds));
}

}  // namespace scalefit
