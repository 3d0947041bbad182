#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "domgap/error.hpp"
#include "domgap/fid.hpp"
#include "domgap/texture.hpp"

namespace domgap {

enum class Subset { Day, Night, All };

inline const char* to_string(Subset s) {
    switch (s) {
        case Subset::Day: return "day";
        case Subset::Night: return "night";
        default: return "all";
    }
}

inline Subset parse_subset(const std::string& s) {
    if (s == "day") return Subset::Day;
    if (s == "night") return Subset::Night;
    if (s == "all") return Subset::All;
    throw ParseError("unknown subset '" + s + "' (expected day, night or all)");
}

struct CollectionConfig {
    std::string name;
    std::string manifest;    // as written in the config
    std::string image_root;  // as written in the config; defaults to the manifest's directory
    std::optional<std::string> class_label;
    std::vector<std::string> locations;  // empty: all
};

struct ColorConfig {
    std::size_t hue_bins = 64;
    std::size_t gray_bins = 256;
    std::vector<std::pair<std::string, std::string>> pairs;  // empty: all unordered pairs
    bool per_image_mean = false;
};

struct TextureConfig {
    std::vector<std::string> collections;  // empty: all
    std::optional<std::string> reference;
    Subset subset = Subset::Day;
    TextureOptions options;
    std::size_t max_images = 0;  // 0: every usable record
    std::optional<std::string> patch_list;
};

struct EmbeddingEntry {
    std::string collection;
    Subset subset = Subset::All;
    Depth depth = Depth::Final;
    std::string path;
};

struct FidConfig {
    std::string reference;
    std::string baseline;
    double eps = 1e-6;
    std::vector<EmbeddingEntry> embeddings;
};

struct ClassificationRun {
    std::string name;
    std::string predictions;
};

struct ClassificationConfig {
    std::string class_label;
    std::vector<ClassificationRun> runs;  // first run is the baseline
};

inline const std::vector<std::string>& all_stage_names() {
    static const std::vector<std::string> names = {"color", "texture", "fid", "classification"};
    return names;
}

/// Whole-run configuration. Relative paths resolve against `base_dir`
/// (the directory holding the config file).
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string out_dir = "out";
    std::vector<std::string> stages;
    double grayscale_threshold = 0.02;
    int crop_side = 256;
    std::vector<CollectionConfig> collections;
    ColorConfig color;
    TextureConfig texture;
    FidConfig fid;
    ClassificationConfig classification;
    std::filesystem::path base_dir = ".";

    std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    const CollectionConfig& collection(const std::string& name) const {
        for (const auto& c : collections)
            if (c.name == name) return c;
        throw InvalidArgument("unknown collection '" + name + "'");
    }

    bool has_stage(const std::string& s) const {
        for (const auto& x : stages)
            if (x == s) return true;
        return false;
    }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j, std::filesystem::path base_dir = ".") {
    RunConfig c;
    c.base_dir = std::move(base_dir);
    try {
        c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
        c.workers = detail::get_or<std::size_t>(j, "workers", 1);
        c.out_dir = detail::get_or<std::string>(j, "out_dir", "out");
        c.stages = detail::get_or<std::vector<std::string>>(j, "stages", {});
        c.grayscale_threshold = detail::get_or<double>(j, "grayscale_threshold", 0.02);
        c.crop_side = detail::get_or<int>(j, "crop_side", 256);

        for (const auto& cj : j.value("collections", nlohmann::json::array())) {
            CollectionConfig cc;
            cc.name = cj.at("name").get<std::string>();
            cc.manifest = cj.at("manifest").get<std::string>();
            cc.image_root = detail::get_or<std::string>(cj, "image_root", "");
            if (cj.contains("class") && !cj.at("class").is_null())
                cc.class_label = cj.at("class").get<std::string>();
            for (const auto& loc : cj.value("locations", nlohmann::json::array()))
                cc.locations.push_back(loc.is_string() ? loc.get<std::string>() : loc.dump());
            c.collections.push_back(std::move(cc));
        }

        const auto color = j.value("color", nlohmann::json::object());
        c.color.hue_bins = detail::get_or<std::size_t>(color, "hue_bins", 64);
        c.color.gray_bins = detail::get_or<std::size_t>(color, "gray_bins", 256);
        c.color.per_image_mean = detail::get_or<bool>(color, "per_image_mean", false);
        for (const auto& p : color.value("pairs", nlohmann::json::array())) {
            if (!p.is_array() || p.size() != 2) throw ParseError("color.pairs entries must be [a, b]");
            c.color.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
        }

        const auto tex = j.value("texture", nlohmann::json::object());
        c.texture.collections = detail::get_or<std::vector<std::string>>(tex, "collections", {});
        if (tex.contains("reference")) c.texture.reference = tex.at("reference").get<std::string>();
        c.texture.subset = parse_subset(detail::get_or<std::string>(tex, "subset", "day"));
        c.texture.options.patches_per_image = detail::get_or<int>(tex, "patches_per_image", 4);
        c.texture.options.side = detail::get_or<int>(tex, "side", 20);
        c.texture.options.levels = detail::get_or<int>(tex, "levels", 16);
        if (tex.contains("offsets")) {
            c.texture.options.offsets.clear();
            for (const auto& o : tex.at("offsets"))
                c.texture.options.offsets.push_back({o.at(0).get<int>(), o.at(1).get<int>()});
        }
        c.texture.max_images = detail::get_or<std::size_t>(tex, "max_images", 0);
        if (tex.contains("patch_list")) c.texture.patch_list = tex.at("patch_list").get<std::string>();

        const auto fid = j.value("fid", nlohmann::json::object());
        c.fid.reference = detail::get_or<std::string>(fid, "reference", "");
        c.fid.baseline = detail::get_or<std::string>(fid, "baseline", "");
        c.fid.eps = detail::get_or<double>(fid, "eps", 1e-6);
        for (const auto& e : fid.value("embeddings", nlohmann::json::array())) {
            EmbeddingEntry entry;
            entry.collection = e.at("collection").get<std::string>();
            entry.subset = parse_subset(detail::get_or<std::string>(e, "subset", "all"));
            const auto depth = depth_from_int(e.at("depth").get<long long>());
            if (!depth) throw ParseError("fid.embeddings: depth must be one of 64, 192, 768, 2048");
            entry.depth = *depth;
            entry.path = e.at("path").get<std::string>();
            c.fid.embeddings.push_back(std::move(entry));
        }

        const auto cls = j.value("classification", nlohmann::json::object());
        c.classification.class_label = detail::get_or<std::string>(cls, "class", "");
        for (const auto& r : cls.value("runs", nlohmann::json::array()))
            c.classification.runs.push_back(
                {r.at("name").get<std::string>(), r.at("predictions").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid config: ") + e.what());
    }

    if (c.stages.empty()) {
        if (!c.collections.empty()) c.stages.push_back("color");
        if (!c.texture.collections.empty() || j.contains("texture")) c.stages.push_back("texture");
        if (!c.fid.embeddings.empty()) c.stages.push_back("fid");
        if (!c.classification.runs.empty()) c.stages.push_back("classification");
    }
    const std::set<std::string> known(all_stage_names().begin(), all_stage_names().end());
    for (const auto& s : c.stages)
        if (!known.count(s)) throw ParseError("unknown stage '" + s + "'");
    std::set<std::string> names;
    for (const auto& cc : c.collections)
        if (!names.insert(cc.name).second) throw ParseError("duplicate collection name '" + cc.name + "'");
    if (c.workers == 0) c.workers = 1;
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": malformed JSON: " + e.what());
    }
    return parse_config(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

/// Echo of every setting that influences reported numbers. Worker count and
/// output directory are left out so that reports compare across machines.
inline nlohmann::json config_echo(const RunConfig& c) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& cc : c.collections) {
        nlohmann::json o{{"name", cc.name}, {"manifest", cc.manifest}, {"image_root", cc.image_root},
                         {"locations", cc.locations}};
        o["class"] = cc.class_label ? nlohmann::json(*cc.class_label) : nlohmann::json(nullptr);
        cols.push_back(std::move(o));
    }
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : c.color.pairs) pairs.push_back({a, b});
    nlohmann::json offsets = nlohmann::json::array();
    for (const auto& o : c.texture.options.offsets) offsets.push_back({o.dx, o.dy});
    nlohmann::json embeddings = nlohmann::json::array();
    for (const auto& e : c.fid.embeddings)
        embeddings.push_back({{"collection", e.collection}, {"subset", to_string(e.subset)},
                              {"depth", dim_of(e.depth)}, {"path", e.path}});
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : c.classification.runs)
        runs.push_back({{"name", r.name}, {"predictions", r.predictions}});

    return {
        {"seed", c.seed},
        {"stages", c.stages},
        {"grayscale_threshold", c.grayscale_threshold},
        {"crop_side", c.crop_side},
        {"collections", cols},
        {"color", {{"hue_bins", c.color.hue_bins}, {"gray_bins", c.color.gray_bins},
                   {"pairs", pairs}, {"per_image_mean", c.color.per_image_mean}}},
        {"texture", {{"collections", c.texture.collections},
                     {"reference", c.texture.reference ? nlohmann::json(*c.texture.reference) : nlohmann::json(nullptr)},
                     {"subset", to_string(c.texture.subset)},
                     {"patches_per_image", c.texture.options.patches_per_image},
                     {"side", c.texture.options.side},
                     {"levels", c.texture.options.levels},
                     {"offsets", offsets},
                     {"max_images", c.texture.max_images},
                     {"patch_list", c.texture.patch_list ? nlohmann::json(*c.texture.patch_list) : nlohmann::json(nullptr)}}},
        {"fid", {{"reference", c.fid.reference}, {"baseline", c.fid.baseline}, {"eps", c.fid.eps},
                 {"embeddings", embeddings}}},
        {"classification", {{"class", c.classification.class_label}, {"runs", runs}}},
    };
}

}  // namespace domgap
