#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogsense/puzzle.hpp"

namespace cogsense {

struct DatasetIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json panel_to_json(const Panel& p) {
    nlohmann::json cells = nlohmann::json::array();
    for (const Cell& c : p.cells) {
        cells.push_back({c.shape, c.color, c.size, c.present ? 1 : 0});
    }
    return nlohmann::json{{"w", p.width}, {"h", p.height}, {"cells", std::move(cells)}};
}

inline Panel panel_from_json(const nlohmann::json& j) {
    Panel p(j.at("w").get<int>(), j.at("h").get<int>());
    const auto& cells = j.at("cells");
    if (cells.size() != p.cells.size()) {
        throw DatasetIoError("panel cell list does not match dimensions");
    }
    for (size_t i = 0; i < p.cells.size(); ++i) {
        const auto& c = cells[i];
        p.cells[i].shape = c.at(0).get<int>();
        p.cells[i].color = c.at(1).get<int>();
        p.cells[i].size = c.at(2).get<int>();
        p.cells[i].present = c.at(3).get<int>() != 0;
    }
    return p;
}

}  // namespace detail

inline nlohmann::json record_to_json(const DatasetRecord& rec) {
    nlohmann::json q = nlohmann::json::array();
    for (const Panel& p : rec.puzzle.question_panels) q.push_back(detail::panel_to_json(p));
    nlohmann::json o = nlohmann::json::array();
    for (const Panel& p : rec.puzzle.option_panels) o.push_back(detail::panel_to_json(p));
    return nlohmann::json{
        {"category", category_name(rec.puzzle.rule.category)},
        {"rule_kind", rule_kind_name(rec.puzzle.rule.rule_kind)},
        {"attribute", attribute_name(rec.puzzle.rule.attribute)},
        {"rule_params", rec.puzzle.rule.parameters},
        {"question_panels", std::move(q)},
        {"option_panels", std::move(o)},
        {"answer_index", rec.puzzle.answer_index},
        {"rationale_tokens", rec.puzzle.rationale},
        {"split", rec.split},
        {"seed", rec.seed},
    };
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
    DatasetRecord rec;
    rec.puzzle.rule.category = category_from(j.at("category").get<std::string>());
    rec.puzzle.rule.rule_kind = rule_kind_from(j.at("rule_kind").get<std::string>());
    rec.puzzle.rule.attribute = attribute_from(j.at("attribute").get<std::string>());
    rec.puzzle.rule.parameters = j.at("rule_params").get<std::vector<int>>();
    for (const auto& p : j.at("question_panels")) {
        rec.puzzle.question_panels.push_back(detail::panel_from_json(p));
    }
    for (const auto& p : j.at("option_panels")) {
        rec.puzzle.option_panels.push_back(detail::panel_from_json(p));
    }
    rec.puzzle.answer_index = j.at("answer_index").get<int>();
    rec.puzzle.rationale = j.at("rationale_tokens").get<std::vector<int>>();
    rec.split = j.at("split").get<std::string>();
    rec.seed = j.at("seed").get<uint64_t>();
    if (rec.puzzle.answer_index < 0 || rec.puzzle.answer_index >= rec.puzzle.option_count()) {
        throw DatasetIoError("answer_index out of range");
    }
    return rec;
}

// One JSON object per line.
inline void serialize_dataset(const std::vector<DatasetRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DatasetIoError("serialize_dataset: cannot open '" + path + "' for writing");
    for (const DatasetRecord& rec : records) {
        out << record_to_json(rec).dump() << "\n";
    }
    if (!out) throw DatasetIoError("serialize_dataset: write failed for '" + path + "'");
}

// Parse failures report the 1-based line number.
inline std::vector<DatasetRecord> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetIoError("load_dataset: cannot open '" + path + "'");
    std::vector<DatasetRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const DatasetIoError& e) {
            throw DatasetIoError(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw DatasetIoError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace cogsense
