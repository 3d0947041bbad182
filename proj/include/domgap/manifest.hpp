#pragma once

#include <concepts>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "domgap/error.hpp"
#include "domgap/image.hpp"
#include "domgap/image_io.hpp"
#include "domgap/parallel.hpp"
#include "domgap/random.hpp"

namespace domgap {

enum class DayNight { Unknown, Day, Night };

inline const char* to_string(DayNight d) {
    switch (d) {
        case DayNight::Day: return "day";
        case DayNight::Night: return "night";
        default: return "unknown";
    }
}

/// Calendar timestamp from `date_captured` ("YYYY-MM-DD HH:MM:SS" or ISO-8601 with 'T').
struct CaptureTime {
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    std::string text;  // as found in the manifest, written back verbatim

    friend bool operator==(const CaptureTime&, const CaptureTime&) = default;
};

inline std::optional<CaptureTime> parse_capture_time(const std::string& s) {
    CaptureTime t;
    char sep = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &t.year, &t.month, &t.day, &sep,
                    &t.hour, &t.minute, &t.second) != 7 ||
        (sep != ' ' && sep != 'T'))
        return std::nullopt;
    if (t.month < 1 || t.month > 12 || t.day < 1 || t.day > 31 || t.hour < 0 || t.hour > 23 ||
        t.minute < 0 || t.minute > 59 || t.second < 0 || t.second > 60)
        return std::nullopt;
    t.text = s;
    return t;
}

/// One sample: an image, or one annotated object of an image.
struct ImageRecord {
    std::string image_id;         // unique within a manifest
    std::string source_image_id;  // id of the image entry this record came from
    std::optional<std::string> annotation_id;
    std::string file_path;
    std::string class_label;  // empty for images without any annotation
    std::string location_id;
    std::optional<CaptureTime> capture_time;
    std::optional<BBox> bbox;
    std::optional<int> image_width, image_height;
    DayNight day_night = DayNight::Unknown;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Manifest {
    std::vector<ImageRecord> records;
    std::set<std::string> categories;
    std::set<std::string> locations;
    std::map<std::string, nlohmann::json> category_ids;  // label -> id as found in the source
    std::vector<std::string> warnings;

    std::size_t count(const std::string& class_label) const {
        return static_cast<std::size_t>(std::count_if(
            records.begin(), records.end(),
            [&](const ImageRecord& r) { return r.class_label == class_label; }));
    }
};

namespace detail {

inline std::string id_string(const nlohmann::json& v, const std::string& what) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    throw ParseError(what + " must be a string or integer");
}

inline const nlohmann::json& require_array(const nlohmann::json& root, const char* key) {
    if (!root.is_object() || !root.contains(key) || !root.at(key).is_array())
        throw ParseError(std::string("manifest is missing the '") + key + "' array");
    return root.at(key);
}

}  // namespace detail

/// Builds a Manifest from COCO-CameraTraps JSON (images / annotations / categories).
///
/// Images with several annotations yield one record per annotation, with
/// record ids "<image id>#<k>" in annotation order; images without
/// annotations yield one unlabeled record without a bbox.
inline Manifest parse_manifest_json(const nlohmann::json& root) {
    const auto& images = detail::require_array(root, "images");
    const auto& annotations = detail::require_array(root, "annotations");
    const auto& categories = detail::require_array(root, "categories");

    Manifest m;
    std::map<std::string, std::string> label_of;  // category id -> name
    for (const auto& c : categories) {
        if (!c.contains("id") || !c.contains("name") || !c.at("name").is_string())
            throw ParseError("category entry needs 'id' and 'name'");
        const std::string id = detail::id_string(c.at("id"), "category id");
        const std::string name = c.at("name").get<std::string>();
        if (!label_of.emplace(id, name).second) throw ParseError("duplicate category id " + id);
        m.categories.insert(name);
        m.category_ids.emplace(name, c.at("id"));
    }

    std::map<std::string, std::vector<const nlohmann::json*>> anns_by_image;
    std::set<std::string> image_ids;
    for (const auto& im : images) {
        if (!im.is_object() || !im.contains("id")) throw ParseError("image entry without 'id'");
        const std::string id = detail::id_string(im.at("id"), "image id");
        if (!image_ids.insert(id).second) throw ParseError("duplicate image id " + id);
    }
    for (const auto& a : annotations) {
        if (!a.is_object() || !a.contains("image_id"))
            throw ParseError("annotation without 'image_id'");
        const std::string iid = detail::id_string(a.at("image_id"), "annotation image_id");
        if (!image_ids.count(iid))
            throw ParseError("annotation references unknown image id " + iid);
        anns_by_image[iid].push_back(&a);
    }

    std::set<std::string> record_ids;
    for (const auto& im : images) {
        ImageRecord base;
        base.source_image_id = detail::id_string(im.at("id"), "image id");
        base.file_path = im.value("file_name", std::string{});
        if (im.contains("location") && !im.at("location").is_null())
            base.location_id = detail::id_string(im.at("location"), "location");
        if (im.contains("width") && im.at("width").is_number_integer())
            base.image_width = im.at("width").get<int>();
        if (im.contains("height") && im.at("height").is_number_integer())
            base.image_height = im.at("height").get<int>();
        if (im.contains("date_captured") && im.at("date_captured").is_string()) {
            const auto text = im.at("date_captured").get<std::string>();
            base.capture_time = parse_capture_time(text);
            if (!base.capture_time)
                m.warnings.push_back("image " + base.source_image_id +
                                     ": unparseable date_captured '" + text + "'");
        }
        if (im.contains("day_night") && im.at("day_night").is_string()) {
            const auto dn = im.at("day_night").get<std::string>();
            if (dn == "day") base.day_night = DayNight::Day;
            else if (dn == "night") base.day_night = DayNight::Night;
        }
        if (!base.location_id.empty()) m.locations.insert(base.location_id);

        const auto it = anns_by_image.find(base.source_image_id);
        const std::size_t n_ann = it == anns_by_image.end() ? 0 : it->second.size();
        auto add = [&](ImageRecord r) {
            if (!record_ids.insert(r.image_id).second)
                throw ParseError("record id collision: " + r.image_id);
            m.records.push_back(std::move(r));
        };
        if (n_ann == 0) {
            base.image_id = base.source_image_id;
            add(std::move(base));
            continue;
        }
        for (std::size_t k = 0; k < n_ann; ++k) {
            const nlohmann::json& a = *it->second[k];
            ImageRecord r = base;
            r.image_id = n_ann == 1 ? base.source_image_id
                                    : base.source_image_id + "#" + std::to_string(k);
            r.annotation_id = a.contains("id") ? detail::id_string(a.at("id"), "annotation id")
                                               : r.image_id;
            if (!a.contains("category_id"))
                throw ParseError("annotation of image " + r.source_image_id + " has no category_id");
            const std::string cid = detail::id_string(a.at("category_id"), "category_id");
            const auto cat = label_of.find(cid);
            if (cat == label_of.end())
                throw ParseError("annotation of image " + r.source_image_id +
                                 " references unknown category id " + cid);
            r.class_label = cat->second;
            if (a.contains("bbox") && a.at("bbox").is_array()) {
                const auto& b = a.at("bbox");
                if (b.size() != 4 || !std::all_of(b.begin(), b.end(),
                                                  [](const auto& v) { return v.is_number(); }))
                    throw ParseError("annotation of image " + r.source_image_id +
                                     ": bbox must be [x, y, width, height]");
                BBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                         b[3].get<double>()};
                if (r.image_width && r.image_height) {
                    const double x0 = std::max(0.0, box.x), y0 = std::max(0.0, box.y);
                    const double x1 = std::min<double>(*r.image_width, box.x + box.width);
                    const double y1 = std::min<double>(*r.image_height, box.y + box.height);
                    box = {x0, y0, x1 - x0, y1 - y0};
                }
                if (box.width > 0 && box.height > 0)
                    r.bbox = box;
                else
                    m.warnings.push_back("record " + r.image_id +
                                         ": empty bbox after clamping, dropped");
            }
            add(std::move(r));
        }
    }
    return m;
}

inline Manifest parse_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": malformed JSON: " + e.what());
    }
    return parse_manifest_json(root);
}

/// Serializes back to COCO-CameraTraps JSON. Keys are sorted, images by id,
/// annotations by (image id, annotation id), categories by id.
inline nlohmann::json manifest_to_json(const Manifest& m) {
    std::vector<const ImageRecord*> recs;
    for (const auto& r : m.records) recs.push_back(&r);
    std::stable_sort(recs.begin(), recs.end(), [](const auto* a, const auto* b) {
        return a->source_image_id < b->source_image_id;
    });

    nlohmann::json images = nlohmann::json::array();
    std::vector<std::pair<std::pair<std::string, std::string>, nlohmann::json>> anns;
    const ImageRecord* prev = nullptr;
    for (const auto* r : recs) {
        if (!prev || prev->source_image_id != r->source_image_id) {
            nlohmann::json im;
            im["id"] = r->source_image_id;
            im["file_name"] = r->file_path;
            if (!r->location_id.empty()) im["location"] = r->location_id;
            if (r->image_width) im["width"] = *r->image_width;
            if (r->image_height) im["height"] = *r->image_height;
            if (r->capture_time) im["date_captured"] = r->capture_time->text;
            if (r->day_night != DayNight::Unknown) im["day_night"] = to_string(r->day_night);
            images.push_back(std::move(im));
        }
        prev = r;
        if (r->class_label.empty()) continue;
        nlohmann::json a;
        a["id"] = r->annotation_id.value_or(r->image_id);
        a["image_id"] = r->source_image_id;
        const auto cid = m.category_ids.find(r->class_label);
        a["category_id"] = cid != m.category_ids.end() ? cid->second : nlohmann::json(r->class_label);
        if (r->bbox) a["bbox"] = {r->bbox->x, r->bbox->y, r->bbox->width, r->bbox->height};
        anns.push_back({{r->source_image_id, a["id"].get<std::string>()}, std::move(a)});
    }
    std::stable_sort(anns.begin(), anns.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    nlohmann::json annotations = nlohmann::json::array();
    for (auto& a : anns) annotations.push_back(std::move(a.second));

    std::vector<std::pair<nlohmann::json, std::string>> cats;
    for (const auto& label : m.categories) {
        const auto cid = m.category_ids.find(label);
        cats.push_back({cid != m.category_ids.end() ? cid->second : nlohmann::json(label), label});
    }
    std::sort(cats.begin(), cats.end());
    nlohmann::json categories = nlohmann::json::array();
    for (const auto& [id, name] : cats) categories.push_back({{"id", id}, {"name", name}});

    return {{"images", images}, {"annotations", annotations}, {"categories", categories}};
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << manifest_to_json(m).dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

/// True when the sampled mean channel spread is at most threshold * 255,
/// i.e. the frame is effectively achromatic (infrared night capture).
inline bool is_grayscale_frame(const RgbImage& image, double grayscale_threshold) {
    return sampled_channel_spread(image) <= grayscale_threshold * 255.0;
}

/// Hour in [7, 19) counts as day.
inline DayNight day_night_from_time(const CaptureTime& t) {
    return (t.hour >= 7 && t.hour < 19) ? DayNight::Day : DayNight::Night;
}

/// Tags every Unknown record Day or Night. Loader maps a record to its
/// decoded image, or std::nullopt when unreadable; records sharing a file
/// path are loaded once. Unreadable images fall back to the capture hour.
template <class Loader>
    requires std::invocable<Loader&, const ImageRecord&>
Manifest split_day_night(const Manifest& manifest, double grayscale_threshold, Loader&& load,
                         std::size_t workers = 1) {
    Manifest out = manifest;
    std::map<std::string, std::size_t> slot_of;
    std::vector<std::size_t> first_record;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        if (out.records[i].day_night != DayNight::Unknown) continue;
        if (slot_of.emplace(out.records[i].file_path, first_record.size()).second)
            first_record.push_back(i);
    }
    std::vector<DayNight> tags(first_record.size(), DayNight::Unknown);
    parallel_for(first_record.size(), workers, [&](std::size_t k) {
        const ImageRecord& r = out.records[first_record[k]];
        if (std::optional<RgbImage> img = load(r))
            tags[k] = is_grayscale_frame(*img, grayscale_threshold) ? DayNight::Night : DayNight::Day;
    });

    std::vector<std::string> unresolved;
    for (auto& r : out.records) {
        if (r.day_night != DayNight::Unknown) continue;
        r.day_night = tags[slot_of.at(r.file_path)];
        if (r.day_night == DayNight::Unknown && r.capture_time)
            r.day_night = day_night_from_time(*r.capture_time);
        if (r.day_night == DayNight::Unknown) unresolved.push_back(r.image_id);
    }
    if (!unresolved.empty()) {
        std::string msg = "cannot determine day/night (unreadable image, no capture time) for " +
                          std::to_string(unresolved.size()) + " record(s):";
        for (const auto& id : unresolved) msg += " " + id;
        throw InvalidArgument(msg);
    }
    return out;
}

/// Loader reading `image_root / file_path`; decode failures count as unreadable.
inline auto file_loader(std::filesystem::path image_root) {
    return [root = std::move(image_root)](const ImageRecord& r) -> std::optional<RgbImage> {
        try {
            return read_image(root / r.file_path);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
}

inline Manifest split_day_night(const Manifest& manifest, double grayscale_threshold,
                                const std::filesystem::path& image_root, std::size_t workers = 1) {
    return split_day_night(manifest, grayscale_threshold, file_loader(image_root), workers);
}

/// Keeps exactly `n` records of `class_label`, chosen uniformly without
/// replacement; every other record is kept. Record order is preserved.
inline Manifest subsample_class(const Manifest& manifest, const std::string& class_label,
                                std::size_t n, std::uint64_t seed) {
    if (!manifest.categories.count(class_label))
        throw InvalidArgument("unknown class label '" + class_label + "'");
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
        if (manifest.records[i].class_label == class_label) members.push_back(i);
    if (n > members.size())
        throw InvalidArgument("cannot keep " + std::to_string(n) + " records of '" + class_label +
                              "': only " + std::to_string(members.size()) + " available");

    Engine rng(seed);
    for (std::size_t k = 0; k < n; ++k) {  // partial Fisher-Yates
        const std::size_t j = k + uniform_index(rng, members.size() - k);
        std::swap(members[k], members[j]);
    }
    std::vector<bool> drop(manifest.records.size(), false);
    for (std::size_t k = n; k < members.size(); ++k) drop[members[k]] = true;

    Manifest out = manifest;
    out.records.clear();
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
        if (!drop[i]) out.records.push_back(manifest.records[i]);
    return out;
}

/// Records satisfying `keep`; categories/locations are left unchanged.
template <class Pred>
Manifest filter_records(const Manifest& manifest, Pred&& keep) {
    Manifest out = manifest;
    out.records.clear();
    for (const auto& r : manifest.records)
        if (keep(r)) out.records.push_back(r);
    return out;
}

}  // namespace domgap
