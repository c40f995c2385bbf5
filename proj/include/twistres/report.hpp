#pragma once

// Run artifacts: one JSON report per command plus CSV plot data. Every file
// carries the config hash; CSVs start with `# config_hash=<hash>` and get a
// `<name>.header` sidecar describing the columns.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twistres/errors.hpp"

namespace twistres {

inline constexpr const char* kVersion = "0.1.0";

struct Report {
    std::string command;
    std::string config_hash;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json results = nlohmann::json::object();
    nlohmann::json warnings = nlohmann::json::array();
    nlohmann::json provenance = nlohmann::json::object();
};

inline void to_json(nlohmann::json& js, const Report& r) {
    js = {{"command", r.command}, {"config_hash", r.config_hash}, {"config", r.config},
          {"results", r.results}, {"warnings", r.warnings},       {"provenance", r.provenance}};
}

struct CsvTable {
    std::string name;  // file stem
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::string description;
};

class ArtifactWriter {
public:
    ArtifactWriter(std::filesystem::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {}

    void write_csv(const CsvTable& t) {
        ensure_dir();
        const auto path = dir_ / (t.name + ".csv");
        std::ofstream out(path);
        if (!out) throw invalid_input("cannot write " + path.string());
        out << "# config_hash=" << hash_ << '\n';
        for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
        out << '\n' << std::setprecision(17);
        for (const auto& row : t.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
            out << '\n';
        }
        std::ofstream side(dir_ / (t.name + ".header"));
        side << "config_hash=" << hash_ << '\n' << "file=" << t.name << ".csv\n" << "columns=";
        for (std::size_t c = 0; c < t.columns.size(); ++c) side << (c ? "," : "") << t.columns[c];
        side << '\n' << "rows=" << t.rows.size() << '\n' << "description=" << t.description << '\n';
        files_.push_back(path.filename().string());
    }

    void write_report(const Report& r) {
        ensure_dir();
        const auto path = dir_ / (r.command + ".json");
        std::ofstream out(path);
        if (!out) throw invalid_input("cannot write " + path.string());
        out << nlohmann::json(r).dump(2) << '\n';
        files_.push_back(path.filename().string());
    }

    const std::vector<std::string>& files() const { return files_; }

private:
    void ensure_dir() { std::filesystem::create_directories(dir_); }

    std::filesystem::path dir_;
    std::string hash_;
    std::vector<std::string> files_;
};

/// The hash recorded in one artifact (.json, .csv or .header).
inline std::string artifact_hash(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw invalid_input("cannot open " + p.string());
    if (p.extension() == ".json") {
        const auto js = nlohmann::json::parse(in, nullptr, false);
        if (js.is_discarded() || !js.contains("config_hash")) throw invalid_input(p.string() + " has no config hash");
        return js["config_hash"].get<std::string>();
    }
    std::string line;
    while (std::getline(in, line)) {
        for (const char* key : {"# config_hash=", "config_hash="}) {
            const std::string k(key);
            if (line.rfind(k, 0) == 0) return line.substr(k.size());
        }
    }
    throw invalid_input(p.string() + " has no config hash");
}

/// All artifacts in `dir` carry one hash; returns it.
inline std::string verify_artifacts(const std::filesystem::path& dir) {
    std::string hash;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (ext != ".json" && ext != ".csv" && ext != ".header") continue;
        const auto h = artifact_hash(e.path());
        if (hash.empty()) hash = h;
        else if (h != hash) throw invalid_input("config hash mismatch in " + e.path().filename().string());
    }
    if (hash.empty()) throw invalid_input("no artifacts in " + dir.string());
    return hash;
}

}  // namespace twistres
