#include "duckmorph/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "duckmorph/codecs.hpp"
#include "duckmorph/errors.hpp"

namespace duckmorph::dataset {

namespace fs = std::filesystem;

std::vector<FieldError> validate_annotation(const nlohmann::json& j) {
    std::vector<FieldError> errs;
    if (!j.is_object()) return {{"", "annotation must be a JSON object"}};
    auto want_string = [&](const char* key) {
        if (!j.contains(key)) {
            errs.push_back({key, "missing"});
        } else if (!j[key].is_string()) {
            errs.push_back({key, "must be a string"});
        }
    };
    want_string("cloud_id");
    want_string("annotator");
    want_string("timestamp");
    if (!j.contains("points")) {
        errs.push_back({"points", "missing"});
        return errs;
    }
    const auto& pts = j["points"];
    if (!pts.is_object()) {
        errs.push_back({"points", "must be an object keyed A..G"});
        return errs;
    }
    for (char label : geomfeat::kKeypointLabels) {
        const std::string key(1, label);
        const std::string field = "points." + key;
        if (!pts.contains(key)) {
            errs.push_back({field, "missing"});
            continue;
        }
        const auto& p = pts[key];
        if (!p.is_array() || p.size() != 3) {
            errs.push_back({field, "must be an array of 3 numbers"});
            continue;
        }
        for (std::size_t i = 0; i < 3; ++i) {
            if (!p[i].is_number()) {
                errs.push_back({field, "must be an array of 3 numbers"});
                break;
            }
            if (!std::isfinite(p[i].get<double>())) {
                errs.push_back({field, "coordinates must be finite"});
                break;
            }
        }
    }
    for (auto it = pts.begin(); it != pts.end(); ++it) {
        const auto& k = it.key();
        if (k.size() != 1 || k[0] < 'A' || k[0] > 'G') errs.push_back({"points." + k, "unknown keypoint label"});
    }
    return errs;
}

Annotation annotation_from_json(const nlohmann::json& j) {
    const auto errs = validate_annotation(j);
    if (!errs.empty()) {
        std::string msg = "invalid annotation:";
        for (const auto& e : errs) msg += " " + e.field + " " + e.message + ";";
        msg.pop_back();
        throw ValidationError(msg);
    }
    Annotation a;
    a.cloud_id = j["cloud_id"].get<std::string>();
    a.annotator = j["annotator"].get<std::string>();
    a.timestamp = j["timestamp"].get<std::string>();
    for (std::size_t i = 0; i < geomfeat::kKeypointCount; ++i) {
        const auto& p = j["points"][std::string(1, geomfeat::kKeypointLabels[i])];
        a.points[i] = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    }
    return a;
}

nlohmann::json annotation_to_json(const Annotation& a) {
    nlohmann::json pts = nlohmann::json::object();
    for (std::size_t i = 0; i < geomfeat::kKeypointCount; ++i) {
        const auto& p = a.points[i];
        pts[std::string(1, geomfeat::kKeypointLabels[i])] = {p.x, p.y, p.z};
    }
    return {{"cloud_id", a.cloud_id}, {"points", pts}, {"annotator", a.annotator}, {"timestamp", a.timestamp}};
}

Labels labels_from_json(const nlohmann::json& j) {
    Labels out{};
    std::vector<std::string> problems;
    for (std::size_t i = 0; i < kTargetCount; ++i) {
        const std::string key(kTargets[i].key);
        if (!j.contains(key) || !j[key].is_number()) {
            problems.push_back(key + " missing");
            continue;
        }
        out[i] = j[key].get<double>();
        if (!std::isfinite(out[i]) || out[i] <= 0) problems.push_back(key + " must be positive");
    }
    if (!problems.empty()) {
        std::string msg;
        for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
        throw ValidationError(msg);
    }
    return out;
}

nlohmann::json labels_to_json(const Labels& labels) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < kTargetCount; ++i) j[std::string(kTargets[i].key)] = labels[i];
    return j;
}

const SampleRecord* Manifest::find(std::string_view sample_id) const {
    for (const auto& s : samples)
        if (s.sample_id == sample_id) return &s;
    return nullptr;
}

SampleRecord* Manifest::find(std::string_view sample_id) {
    for (auto& s : samples)
        if (s.sample_id == sample_id) return &s;
    return nullptr;
}

std::map<std::string, std::vector<std::size_t>> Manifest::groups() const {
    std::map<std::string, std::vector<std::size_t>> g;
    for (std::size_t i = 0; i < samples.size(); ++i) g[samples[i].duck_id].push_back(i);
    return g;
}

nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : kTargets) targets.push_back({{"name", t.key}, {"unit", t.unit}});
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : m.samples) {
        nlohmann::json files = nlohmann::json::object();
        for (auto f : kRequiredFiles) files[std::string(f.substr(0, f.find('.')))] = s.dir + "/" + std::string(f);
        if (s.annotated) files["annotation"] = s.dir + "/annotation.json";
        nlohmann::json rec = {{"sample_id", s.sample_id},
                              {"duck_id", s.duck_id},
                              {"dir", s.dir},
                              {"files", files},
                              {"labels", std::vector<double>(s.labels.begin(), s.labels.end())}};
        if (s.features) rec["features"] = std::vector<double>(s.features->begin(), s.features->end());
        samples.push_back(std::move(rec));
    }
    return {{"version", 1},
            {"geometry_unit", "mm"},
            {"cloud_unit_scale", m.cloud_unit_scale},
            {"targets", targets},
            {"samples", samples}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    try {
        m.cloud_unit_scale = j.value("cloud_unit_scale", 1.0);
        for (const auto& r : j.at("samples")) {
            SampleRecord s;
            s.sample_id = r.at("sample_id").get<std::string>();
            s.duck_id = r.at("duck_id").get<std::string>();
            s.dir = r.at("dir").get<std::string>();
            s.annotated = r.at("files").contains("annotation");
            const auto labels = r.at("labels").get<std::vector<double>>();
            if (labels.size() != kTargetCount)
                throw ValidationError("sample " + s.sample_id + ": expected 8 labels, got " + std::to_string(labels.size()));
            std::copy(labels.begin(), labels.end(), s.labels.begin());
            for (std::size_t i = 0; i < kTargetCount; ++i) {
                if (!(s.labels[i] > 0) || !std::isfinite(s.labels[i]))
                    throw ValidationError("sample " + s.sample_id + ": label " + std::string(kTargets[i].key) +
                                          " must be positive");
            }
            if (r.contains("features")) {
                const auto f = r["features"].get<std::vector<double>>();
                if (f.size() != geomfeat::kFeatureCount)
                    throw ValidationError("sample " + s.sample_id + ": expected 10 features");
                std::array<double, geomfeat::kFeatureCount> arr{};
                std::copy(f.begin(), f.end(), arr.begin());
                s.features = arr;
            }
            m.samples.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    std::set<std::string> seen;
    for (const auto& s : m.samples) {
        if (!seen.insert(s.sample_id).second) throw ValidationError("duplicate sample id " + s.sample_id);
    }
    return m;
}

bool valid_identifier(std::string_view id) {
    if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
               c == '.';
    });
}

namespace {

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> missing_files(const fs::path& root, const SampleRecord& s) {
    std::vector<std::string> out;
    for (auto f : kRequiredFiles)
        if (!fs::exists(s.path(root, f))) out.emplace_back(f);
    if (s.annotated && !fs::exists(s.path(root, "annotation.json"))) out.emplace_back("annotation.json");
    return out;
}

} // namespace

Manifest build_manifest(const fs::path& root) {
    Manifest m;
    const fs::path data = root / "data";
    if (!fs::exists(data)) return m;
    std::vector<std::string> problems;
    for (const auto& duck_dir : sorted_subdirs(data)) {
        for (const auto& sample_dir : sorted_subdirs(duck_dir)) {
            SampleRecord s;
            s.duck_id = duck_dir.filename().string();
            s.sample_id = sample_dir.filename().string();
            s.dir = "data/" + s.duck_id + "/" + s.sample_id;
            if (!valid_identifier(s.duck_id) || !valid_identifier(s.sample_id)) {
                problems.push_back(s.dir + ": invalid identifier");
                continue;
            }
            s.annotated = fs::exists(sample_dir / "annotation.json");
            std::vector<std::string> issues;
            for (const auto& f : missing_files(root, s)) issues.push_back("missing " + f);
            if (!fs::exists(sample_dir / "labels.json")) {
                issues.push_back("missing labels.json");
            } else {
                try {
                    s.labels = labels_from_json(nlohmann::json::parse(codecs::read_file(sample_dir / "labels.json")));
                } catch (const nlohmann::json::exception& e) {
                    issues.push_back(std::string("labels.json: ") + e.what());
                } catch (const ValidationError& e) {
                    issues.push_back(std::string("labels.json: ") + e.what());
                }
            }
            if (!issues.empty()) {
                std::string msg = s.sample_id + ":";
                for (const auto& i : issues) msg += " " + i + ";";
                msg.pop_back();
                problems.push_back(msg);
                continue;
            }
            m.samples.push_back(std::move(s));
        }
    }
    if (!problems.empty()) {
        std::string msg = std::to_string(problems.size()) + " invalid sample(s): ";
        for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? " | " : "") + problems[i];
        throw ValidationError(msg);
    }
    std::set<std::string> seen;
    for (const auto& s : m.samples)
        if (!seen.insert(s.sample_id).second) throw ValidationError("sample id " + s.sample_id + " appears twice");
    return m;
}

Manifest load_manifest(const fs::path& root) {
    const fs::path file = root / "manifest.json";
    if (!fs::exists(file)) throw IoError("no manifest.json in " + root.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(codecs::read_file(file));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(file.string() + ": " + e.what(), e.byte);
    }
    Manifest m = manifest_from_json(j);
    std::vector<std::string> dangling;
    for (const auto& s : m.samples)
        for (const auto& f : missing_files(root, s)) dangling.push_back(s.dir + "/" + f);
    if (!dangling.empty()) {
        std::string msg = "manifest references missing files:";
        for (const auto& d : dangling) msg += " " + d;
        throw ValidationError(msg);
    }
    return m;
}

void save_manifest(const fs::path& root, const Manifest& m) {
    codecs::write_file_atomic(root / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

} // namespace duckmorph::dataset
