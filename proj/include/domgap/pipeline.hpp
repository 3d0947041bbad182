#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "domgap/classification.hpp"
#include "domgap/color.hpp"
#include "domgap/config.hpp"
#include "domgap/error.hpp"
#include "domgap/fid.hpp"
#include "domgap/image.hpp"
#include "domgap/image_io.hpp"
#include "domgap/manifest.hpp"
#include "domgap/parallel.hpp"
#include "domgap/random.hpp"
#include "domgap/texture.hpp"

namespace domgap {

/// A stage failed; carries the stage name for the CLI's structured error.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error(stage + ": " + cause), stage_(std::move(stage)), cause_(cause) {}
    const std::string& stage() const noexcept { return stage_; }
    const std::string& cause() const noexcept { return cause_; }

private:
    std::string stage_;
    std::string cause_;
};

/// Everything a run produces. Sections are null for stages that did not run.
struct GapReport {
    nlohmann::json run_config;
    nlohmann::json color;
    nlohmann::json texture;
    nlohmann::json fid;
    nlohmann::json classification;
    std::vector<std::string> warnings;
    /// Additional files (CSV tables and plot data), keyed by file name.
    std::map<std::string, std::string> files;

    nlohmann::json to_json() const {
        nlohmann::json j{{"run_config", run_config}, {"warnings", warnings}};
        if (!color.is_null()) j["color"] = color;
        if (!texture.is_null()) j["texture"] = texture;
        if (!fid.is_null()) j["fid"] = fid;
        if (!classification.is_null()) j["classification"] = classification;
        return j;
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::string id_list(const std::vector<std::string>& ids) {
    std::string s;
    const std::size_t shown = std::min<std::size_t>(ids.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) s += (i ? ", " : "") + ids[i];
    if (ids.size() > shown) s += ", ... (" + std::to_string(ids.size() - shown) + " more)";
    return s;
}

inline bool in_subset(DayNight d, Subset s) {
    return s == Subset::All || (s == Subset::Day && d == DayNight::Day) ||
           (s == Subset::Night && d == DayNight::Night);
}

}  // namespace detail

/// Runs the configured stages. Collections are loaded, filtered and
/// day/night-tagged once and shared between stages.
class Pipeline {
public:
    explicit Pipeline(RunConfig config) : cfg_(std::move(config)) {}

    const RunConfig& config() const noexcept { return cfg_; }

    GapReport run() {
        GapReport report;
        report.run_config = config_echo(cfg_);
        for (const auto& stage : all_stage_names()) {
            if (!cfg_.has_stage(stage)) continue;
            try {
                if (stage == "color") run_color(report);
                else if (stage == "texture") run_texture(report);
                else if (stage == "fid") run_fid(report);
                else if (stage == "classification") run_classification(report);
            } catch (const StageError&) {
                throw;
            } catch (const std::exception& e) {
                throw StageError(stage, e.what());
            }
        }
        report.warnings = warnings_;
        return report;
    }

    // ---------------------------------------------------------------- color
    void run_color(GapReport& report) {
        std::vector<std::pair<std::string, std::string>> pairs = cfg_.color.pairs;
        if (pairs.empty())
            for (std::size_t i = 0; i < cfg_.collections.size(); ++i)
                for (std::size_t k = i + 1; k < cfg_.collections.size(); ++k)
                    pairs.emplace_back(cfg_.collections[i].name, cfg_.collections[k].name);
        if (pairs.empty()) throw InvalidArgument("color stage needs at least 2 collections");

        std::vector<std::string> names;
        for (const auto& [a, b] : pairs)
            for (const auto* n : {&a, &b})
                if (std::find(names.begin(), names.end(), *n) == names.end()) names.push_back(*n);

        std::map<std::string, ColorSamples> samples;
        for (const auto& name : names) samples.emplace(name, color_samples(name));

        nlohmann::json correlations = nlohmann::json::array();
        std::ostringstream csv;
        csv << "collection_a,collection_b,subset,correlation\n";
        for (const auto& [a, b] : pairs) {
            nlohmann::json row{{"a", a}, {"b", b}};
            for (Subset s : {Subset::Day, Subset::Night}) {
                const auto r = correlate(samples.at(a), samples.at(b), s, a, b);
                row[to_string(s)] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
                csv << csv::escape(a) << ',' << csv::escape(b) << ',' << to_string(s) << ','
                    << (r ? detail::fmt_double(*r) : std::string("")) << '\n';
            }
            correlations.push_back(std::move(row));
        }

        nlohmann::json histograms = nlohmann::json::object();
        for (const auto& name : names) {
            const auto& cs = samples.at(name);
            nlohmann::json h{{"day_images", cs.day.size()}, {"night_images", cs.night.size()}};
            for (Subset s : {Subset::Day, Subset::Night}) {
                if (const auto* agg = cs.aggregate(s)) {
                    h[std::string(to_string(s))] = histogram_to_json(*agg);
                    std::ostringstream plot;
                    write_histogram_csv(plot, *agg);
                    report.files["plot_hist_" + name + "_" + to_string(s) + ".csv"] = plot.str();
                }
            }
            histograms[name] = std::move(h);
        }

        report.color = {{"method", cfg_.color.per_image_mean ? "per_image_mean" : "aggregate"},
                        {"hue_bins", cfg_.color.hue_bins},
                        {"gray_bins", cfg_.color.gray_bins},
                        {"correlations", correlations},
                        {"histograms", histograms}};
        report.files["report_color.csv"] = csv.str();
    }

    // -------------------------------------------------------------- texture
    void run_texture(GapReport& report) {
        std::vector<std::string> names = cfg_.texture.collections;
        if (names.empty())
            for (const auto& c : cfg_.collections) names.push_back(c.name);
        if (names.empty()) throw InvalidArgument("texture stage needs at least 1 collection");

        std::map<std::string, std::vector<PatchSpec>> manual;
        if (cfg_.texture.patch_list) manual = load_patch_list(cfg_.resolve(*cfg_.texture.patch_list).string());

        const std::uint64_t stage_seed = derive_seed(cfg_.seed, "texture");
        std::map<std::string, GlcmFeatures> features;
        std::map<std::string, std::size_t> image_counts;
        for (const auto& name : names)
            features.emplace(name, texture_of(name, manual, derive_seed(stage_seed, name), image_counts[name]));

        auto feature_json = [](const GlcmFeatures& f) {
            return nlohmann::json{{"contrast", f.contrast}, {"homogeneity", f.homogeneity},
                                  {"energy", f.energy}, {"entropy", f.entropy},
                                  {"patch_count", f.patch_count}, {"levels", f.levels}};
        };
        nlohmann::json per = nlohmann::json::object();
        std::ostringstream csv;
        csv << "collection,images,patch_count,contrast,homogeneity,energy,entropy\n";
        for (const auto& name : names) {
            const auto& f = features.at(name);
            auto j = feature_json(f);
            j["images"] = image_counts.at(name);
            per[name] = std::move(j);
            csv << csv::escape(name) << ',' << image_counts.at(name) << ',' << f.patch_count << ','
                << detail::fmt_double(f.contrast) << ',' << detail::fmt_double(f.homogeneity) << ','
                << detail::fmt_double(f.energy) << ',' << detail::fmt_double(f.entropy) << '\n';
        }
        report.texture = {{"subset", to_string(cfg_.texture.subset)}, {"collections", per}};

        if (cfg_.texture.reference) {
            const auto& ref_name = *cfg_.texture.reference;
            const auto ref = features.find(ref_name);
            if (ref == features.end())
                throw InvalidArgument("texture reference '" + ref_name + "' is not a texture collection");
            nlohmann::json deltas = nlohmann::json::object();
            csv << "\ncollection,reference,abs_delta_contrast,abs_delta_homogeneity,abs_delta_energy,"
                   "abs_delta_entropy\n";
            for (const auto& name : names) {
                if (name == ref_name) continue;
                const auto& f = features.at(name);
                const auto& r = ref->second;
                const double dc = std::abs(f.contrast - r.contrast);
                const double dh = std::abs(f.homogeneity - r.homogeneity);
                const double de = std::abs(f.energy - r.energy);
                const double ds = std::abs(f.entropy - r.entropy);
                deltas[name] = {{"contrast", dc}, {"homogeneity", dh}, {"energy", de}, {"entropy", ds}};
                csv << csv::escape(name) << ',' << csv::escape(ref_name) << ',' << detail::fmt_double(dc)
                    << ',' << detail::fmt_double(dh) << ',' << detail::fmt_double(de) << ','
                    << detail::fmt_double(ds) << '\n';
            }
            report.texture["reference"] = ref_name;
            report.texture["abs_delta_to_reference"] = deltas;
        }
        report.files["report_texture.csv"] = csv.str();
    }

    // ------------------------------------------------------------------ fid
    void run_fid(GapReport& report) {
        const auto& fc = cfg_.fid;
        if (fc.reference.empty() || fc.baseline.empty())
            throw InvalidArgument("fid stage needs 'reference' and 'baseline' collections");
        if (fc.embeddings.empty()) throw InvalidArgument("fid stage has no embeddings configured");

        // subset -> depth -> collection -> path, in first-seen order
        std::vector<Subset> subsets;
        std::map<Subset, std::map<int, std::vector<std::pair<std::string, std::string>>>> table;
        for (const auto& e : fc.embeddings) {
            if (std::find(subsets.begin(), subsets.end(), e.subset) == subsets.end())
                subsets.push_back(e.subset);
            auto& list = table[e.subset][dim_of(e.depth)];
            for (const auto& [coll, _] : list)
                if (coll == e.collection)
                    throw InvalidArgument("duplicate embedding entry for " + coll + " / " +
                                          to_string(e.subset) + " / " + std::to_string(dim_of(e.depth)));
            list.emplace_back(e.collection, e.path);
        }

        nlohmann::json out = nlohmann::json::object();
        std::ostringstream csv;
        csv << "subset,depth,collection,fid,normalized,regularized\n";
        for (Subset s : subsets) {
            nlohmann::json depths = nlohmann::json::array();
            std::vector<std::string> plot_cols;
            std::vector<std::pair<int, std::map<std::string, double>>> plot_rows;
            for (const auto& [depth, entries] : table.at(s)) {
                const auto find = [&](const std::string& coll) -> const std::string& {
                    for (const auto& [c, p] : entries)
                        if (c == coll) return p;
                    throw InvalidArgument("no embeddings for '" + coll + "' at depth " +
                                          std::to_string(depth) + " (" + to_string(s) + ")");
                };
                const Depth d = *depth_from_int(depth);
                std::optional<std::string> extractor;
                auto load = [&](const std::string& coll) {
                    const auto path = cfg_.resolve(find(coll));
                    if (!std::filesystem::exists(path))
                        throw IoError("missing embedding file " + path.string());
                    check_sidecar(path, d, extractor);
                    EmbeddingSet set = load_embedding_set(path, d);
                    if (set.size() < set.dim())
                        warn("fid: " + coll + " (" + to_string(s) + ", depth " + std::to_string(depth) +
                             ") has " + std::to_string(set.size()) + " samples for " +
                             std::to_string(set.dim()) + " dimensions; covariance is singular");
                    return fit_gaussian(set);
                };
                const FrechetOperand ref(load(fc.reference));
                std::vector<std::string> order{fc.baseline};
                for (const auto& [c, _] : entries)
                    if (c != fc.reference && c != fc.baseline) order.push_back(c);

                std::map<std::string, FrechetResult> results;
                for (const auto& coll : order) {
                    const FrechetOperand cand(load(coll));
                    const auto r = frechet_distance(ref, cand, fc.eps);
                    if (r.regularized)
                        warn("fid: " + coll + " vs " + fc.reference + " (" + to_string(s) + ", depth " +
                             std::to_string(depth) + ") needed eps regularization");
                    results.emplace(coll, r);
                }
                const double base = results.at(fc.baseline).distance;
                if (!(base > 0))
                    throw NumericError("baseline FID is zero at depth " + std::to_string(depth) +
                                       "; normalized scores are undefined");
                nlohmann::json raw = nlohmann::json::object(), norm = nlohmann::json::object(),
                               reg = nlohmann::json::object();
                std::map<std::string, double> plot_row;
                for (const auto& coll : order) {
                    const auto& r = results.at(coll);
                    const double n = coll == fc.baseline ? 1.0 : normalized_fid(r.distance, base);
                    raw[coll] = r.distance;
                    norm[coll] = n;
                    reg[coll] = r.regularized;
                    plot_row[coll] = n;
                    if (std::find(plot_cols.begin(), plot_cols.end(), coll) == plot_cols.end())
                        plot_cols.push_back(coll);
                    csv << to_string(s) << ',' << depth << ',' << csv::escape(coll) << ','
                        << detail::fmt_double(r.distance) << ',' << detail::fmt_double(n) << ','
                        << (r.regularized ? "true" : "false") << '\n';
                }
                depths.push_back({{"depth", depth}, {"fid", raw}, {"normalized", norm},
                                  {"regularized", reg},
                                  {"extractor_id", extractor ? nlohmann::json(*extractor) : nlohmann::json(nullptr)}});
                plot_rows.emplace_back(depth, std::move(plot_row));
            }
            out[to_string(s)] = std::move(depths);

            std::ostringstream plot;
            plot << "depth";
            for (const auto& c : plot_cols) plot << ',' << csv::escape(c);
            plot << '\n';
            for (const auto& [depth, row] : plot_rows) {
                plot << depth;
                for (const auto& c : plot_cols) {
                    plot << ',';
                    if (const auto it = row.find(c); it != row.end()) plot << detail::fmt_double(it->second);
                }
                plot << '\n';
            }
            report.files["plot_fid_" + std::string(to_string(s)) + ".csv"] = plot.str();
        }
        report.fid = {{"reference", fc.reference}, {"baseline", fc.baseline}, {"eps", fc.eps},
                      {"subsets", out}};
        report.files["report_fid.csv"] = csv.str();
    }

    // ------------------------------------------------------- classification
    void run_classification(GapReport& report) {
        const auto& cc = cfg_.classification;
        if (cc.class_label.empty()) throw InvalidArgument("classification stage needs 'class'");
        if (cc.runs.size() < 2) throw InvalidArgument("classification stage needs at least 2 runs");

        std::vector<std::vector<PredictionRecord>> preds;
        for (const auto& r : cc.runs) preds.push_back(load_predictions(cfg_.resolve(r.predictions)));

        std::vector<Split> splits;
        for (Split s : {Split::Cis, Split::TransPlus})
            if (std::any_of(preds.front().begin(), preds.front().end(),
                            [&](const PredictionRecord& p) { return p.split == s; }))
                splits.push_back(s);
        if (splits.empty()) throw InvalidArgument("baseline run has no predictions");

        nlohmann::json out = nlohmann::json::object();
        std::ostringstream csv;
        csv << "split,run,class,class_error,other_classes_error_macro,other_classes_error_micro,support\n";
        for (Split s : splits) {
            std::vector<ErrorReport> reports;
            nlohmann::json runs = nlohmann::json::array();
            for (std::size_t i = 0; i < cc.runs.size(); ++i) {
                reports.push_back(error_rates(preds[i], s));
                const auto& rep = reports.back();
                if (!rep.per_class_error.count(cc.class_label))
                    throw InvalidArgument("run '" + cc.runs[i].name + "' has no '" + cc.class_label +
                                          "' records in split " + to_string(s));
                runs.push_back(error_report_json(cc.runs[i].name, rep));
                auto opt = [](const std::map<std::string, double>& m, const std::string& k) {
                    const auto it = m.find(k);
                    return it == m.end() ? std::string() : detail::fmt_double(it->second);
                };
                csv << to_string(s) << ',' << csv::escape(cc.runs[i].name) << ','
                    << csv::escape(cc.class_label) << ','
                    << detail::fmt_double(rep.per_class_error.at(cc.class_label)) << ','
                    << opt(rep.macro_error_excluding, cc.class_label) << ','
                    << opt(rep.micro_error_excluding, cc.class_label) << ','
                    << rep.support.at(cc.class_label) << '\n';
            }
            nlohmann::json comparisons = nlohmann::json::array();
            for (std::size_t i = 0; i < reports.size(); ++i) {
                for (std::size_t k = i + 1; k < reports.size(); ++k) {
                    nlohmann::json c{{"baseline", cc.runs[i].name}, {"variant", cc.runs[k].name}};
                    const double eb = reports[i].per_class_error.at(cc.class_label);
                    const double ev = reports[k].per_class_error.at(cc.class_label);
                    if (eb == 0) {
                        warn("classification: " + cc.runs[i].name + " has zero '" + cc.class_label +
                             "' error in " + to_string(s) + "; relative change vs " + cc.runs[k].name +
                             " is undefined");
                        c["relative_decrease_percent"] = nullptr;
                        c["absolute_decrease_points"] = (eb - ev) * 100.0;
                        c["baseline_error"] = eb;
                        c["variant_error"] = ev;
                    } else {
                        const auto r = compare_runs(reports[i], reports[k], cc.class_label);
                        c["relative_decrease_percent"] = r.relative_decrease_percent;
                        c["absolute_decrease_points"] = r.absolute_decrease_points;
                        c["baseline_error"] = r.baseline_error;
                        c["variant_error"] = r.variant_error;
                        c["other_classes_delta_macro"] = r.other_classes_delta_macro
                            ? nlohmann::json(*r.other_classes_delta_macro) : nlohmann::json(nullptr);
                        c["other_classes_delta_micro"] = r.other_classes_delta_micro
                            ? nlohmann::json(*r.other_classes_delta_micro) : nlohmann::json(nullptr);
                    }
                    comparisons.push_back(std::move(c));
                }
            }
            out[to_string(s)] = {{"runs", runs}, {"comparisons", comparisons}};
        }
        report.classification = {{"class", cc.class_label}, {"splits", out}};
        report.files["report_classification.csv"] = csv.str();
    }

    /// Loaded, filtered and day/night-tagged manifest of a collection.
    const Manifest& collection_manifest(const std::string& name) {
        if (const auto it = manifests_.find(name); it != manifests_.end()) return it->second;
        const auto& cc = cfg_.collection(name);
        Manifest m = parse_manifest(cfg_.resolve(cc.manifest));
        for (const auto& w : m.warnings) warn("collection " + name + ": " + w);
        m.warnings.clear();
        m = filter_records(m, [&](const ImageRecord& r) {
            if (cc.class_label && r.class_label != *cc.class_label) return false;
            if (!cc.locations.empty() &&
                std::find(cc.locations.begin(), cc.locations.end(), r.location_id) == cc.locations.end())
                return false;
            return true;
        });
        m = split_day_night(m, cfg_.grayscale_threshold, file_loader(image_root(cc)), cfg_.workers);
        return manifests_.emplace(name, std::move(m)).first->second;
    }

private:
    struct ColorSamples {
        std::vector<NormalizedHistogram> day;    // per-image hue histograms
        std::vector<NormalizedHistogram> night;  // per-image gray histograms
        std::optional<NormalizedHistogram> day_agg, night_agg;

        const std::vector<NormalizedHistogram>& of(Subset s) const { return s == Subset::Day ? day : night; }
        const NormalizedHistogram* aggregate(Subset s) const {
            const auto& a = s == Subset::Day ? day_agg : night_agg;
            return a ? &*a : nullptr;
        }
    };

    void warn(std::string w) { warnings_.push_back(std::move(w)); }

    std::filesystem::path image_root(const CollectionConfig& cc) const {
        if (!cc.image_root.empty()) return cfg_.resolve(cc.image_root);
        return cfg_.resolve(cc.manifest).parent_path();
    }

    /// Square crops of every record with a bbox, as (record, crop). Records
    /// without a bbox and unreadable images are skipped with a warning.
    std::vector<std::pair<const ImageRecord*, RgbImage>> crops(const std::string& name,
                                                               std::vector<const ImageRecord*> recs,
                                                               const std::string& stage) {
        const auto root = image_root(cfg_.collection(name));
        std::vector<std::string> no_bbox;
        std::vector<const ImageRecord*> usable;
        for (const auto* r : recs) {
            if (r->bbox) usable.push_back(r);
            else no_bbox.push_back(r->image_id);
        }
        if (!no_bbox.empty())
            warn(stage + ": collection " + name + ": skipped " + std::to_string(no_bbox.size()) +
                 " record(s) without bbox: " + detail::id_list(no_bbox));

        std::vector<std::optional<RgbImage>> out(usable.size());
        std::vector<std::string> errors(usable.size());
        parallel_for(usable.size(), cfg_.workers, [&](std::size_t i) {
            try {
                out[i] = crop_resize(read_image(root / usable[i]->file_path), *usable[i]->bbox,
                                     cfg_.crop_side);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        });
        std::vector<std::pair<const ImageRecord*, RgbImage>> result;
        std::vector<std::string> failed;
        for (std::size_t i = 0; i < usable.size(); ++i) {
            if (out[i]) result.emplace_back(usable[i], std::move(*out[i]));
            else failed.push_back(usable[i]->image_id + " (" + errors[i] + ")");
        }
        if (!failed.empty())
            warn(stage + ": collection " + name + ": skipped " + std::to_string(failed.size()) +
                 " unreadable crop(s): " + detail::id_list(failed));
        return result;
    }

    ColorSamples color_samples(const std::string& name) {
        const Manifest& m = collection_manifest(name);
        std::vector<const ImageRecord*> recs;
        for (const auto& r : m.records) recs.push_back(&r);
        auto cropped = crops(name, recs, "color");
        if (cropped.empty()) throw InvalidArgument("collection " + name + " has zero usable crops");

        std::vector<NormalizedHistogram> hists(cropped.size());
        parallel_for(cropped.size(), cfg_.workers, [&](std::size_t i) {
            const auto& [rec, img] = cropped[i];
            hists[i] = rec->day_night == DayNight::Day ? hue_histogram(img, cfg_.color.hue_bins)
                                                       : gray_histogram(to_grayscale(img), cfg_.color.gray_bins);
        });
        ColorSamples cs;
        std::vector<std::string> achromatic;
        for (std::size_t i = 0; i < cropped.size(); ++i) {
            if (cropped[i].first->day_night == DayNight::Day) {
                if (hists[i].support == 0) achromatic.push_back(cropped[i].first->image_id);
                cs.day.push_back(std::move(hists[i]));
            } else {
                cs.night.push_back(std::move(hists[i]));
            }
        }
        if (!achromatic.empty())
            warn("color: collection " + name + ": " + std::to_string(achromatic.size()) +
                 " day crop(s) without chromatic pixels excluded from hue aggregation: " +
                 detail::id_list(achromatic));
        for (Subset s : {Subset::Day, Subset::Night}) {
            const auto& v = cs.of(s);
            const bool any = std::any_of(v.begin(), v.end(), [](const auto& h) { return h.support > 0; });
            if (any) (s == Subset::Day ? cs.day_agg : cs.night_agg) = aggregate(v);
            else warn("color: collection " + name + " has no usable " + to_string(s) + " crops");
        }
        return cs;
    }

    std::optional<double> correlate(const ColorSamples& a, const ColorSamples& b, Subset s,
                                    const std::string& an, const std::string& bn) {
        const auto* ha = a.aggregate(s);
        const auto* hb = b.aggregate(s);
        if (!ha || !hb) return std::nullopt;
        auto guarded = [&](const NormalizedHistogram& x, const NormalizedHistogram& y) -> std::optional<double> {
            try {
                return pearson(x, y);
            } catch (const NumericError&) {
                return std::nullopt;
            }
        };
        if (!cfg_.color.per_image_mean) {
            const auto r = guarded(*ha, *hb);
            if (!r)
                warn("color: " + an + " vs " + bn + " (" + to_string(s) +
                     "): correlation undefined (constant distribution)");
            return r;
        }
        CompensatedSum sum;
        std::size_t used = 0, undefined = 0;
        for (const auto& x : a.of(s)) {
            if (x.support == 0) continue;
            for (const auto& y : b.of(s)) {
                if (y.support == 0) continue;
                if (const auto r = guarded(x, y)) {
                    sum.add(*r);
                    ++used;
                } else {
                    ++undefined;
                }
            }
        }
        if (undefined)
            warn("color: " + an + " vs " + bn + " (" + to_string(s) + "): " + std::to_string(undefined) +
                 " image pair(s) with undefined correlation skipped");
        if (used == 0) return std::nullopt;
        return sum.value() / static_cast<double>(used);
    }

    GlcmFeatures texture_of(const std::string& name,
                            const std::map<std::string, std::vector<PatchSpec>>& manual,
                            std::uint64_t seed, std::size_t& image_count) {
        const Manifest& m = collection_manifest(name);
        std::vector<const ImageRecord*> recs;
        for (const auto& r : m.records)
            if (detail::in_subset(r.day_night, cfg_.texture.subset) && r.bbox) recs.push_back(&r);
        std::sort(recs.begin(), recs.end(),
                  [](const auto* a, const auto* b) { return a->image_id < b->image_id; });
        if (cfg_.texture.max_images > 0 && recs.size() > cfg_.texture.max_images) {
            Engine rng(derive_seed(seed, "select"));
            for (std::size_t k = 0; k < cfg_.texture.max_images; ++k)
                std::swap(recs[k], recs[k + uniform_index(rng, recs.size() - k)]);
            recs.resize(cfg_.texture.max_images);
            std::sort(recs.begin(), recs.end(),
                      [](const auto* a, const auto* b) { return a->image_id < b->image_id; });
        }
        std::vector<std::string> no_bbox;
        for (const auto& r : m.records)
            if (detail::in_subset(r.day_night, cfg_.texture.subset) && !r.bbox) no_bbox.push_back(r.image_id);
        if (!no_bbox.empty())
            warn("texture: collection " + name + ": skipped " + std::to_string(no_bbox.size()) +
                 " record(s) without bbox: " + detail::id_list(no_bbox));

        auto cropped = crops(name, recs, "texture");
        if (cropped.empty())
            throw InvalidArgument("collection " + name + " has no usable " +
                                  to_string(cfg_.texture.subset) + " crops for texture");
        image_count = cropped.size();

        const TextureOptions& opts = cfg_.texture.options;
        std::vector<GlcmFeatures> per_image(cropped.size());
        std::vector<char> overlapped(cropped.size(), 0);
        parallel_for(cropped.size(), cfg_.workers, [&](std::size_t i) {
            const auto& [rec, img] = cropped[i];
            const GrayImage gray = to_grayscale(img);
            std::vector<Patch> patches;
            if (const auto it = manual.find(rec->image_id); it != manual.end()) {
                for (const auto& spec : it->second) patches.push_back(patch_at(gray, spec));
            } else {
                auto ex = extract_patches(gray, opts.side, opts.patches_per_image,
                                          derive_seed(seed, rec->image_id));
                overlapped[i] = ex.overlap_fallback;
                patches = std::move(ex.patches);
            }
            per_image[i] = features_of_patches(patches, opts);
        });
        std::vector<std::string> overlap_ids;
        for (std::size_t i = 0; i < cropped.size(); ++i)
            if (overlapped[i]) overlap_ids.push_back(cropped[i].first->image_id);
        if (!overlap_ids.empty())
            warn("texture: collection " + name + ": patches overlap in " +
                 std::to_string(overlap_ids.size()) + " image(s): " + detail::id_list(overlap_ids));
        return mean_features(per_image);
    }

    void check_sidecar(const std::filesystem::path& emb, Depth d, std::optional<std::string>& extractor) {
        const auto side = sidecar_path(emb);
        if (!std::filesystem::exists(side)) {
            warn("fid: no sidecar for " + emb.filename().string());
            return;
        }
        const auto meta = read_sidecar(side);
        if (meta.depth_label != dim_of(d))
            throw InvalidArgument(emb.string() + ": sidecar depth_label " + std::to_string(meta.depth_label) +
                                  " does not match configured depth " + std::to_string(dim_of(d)));
        if (extractor && *extractor != meta.extractor_id)
            throw InvalidArgument("embeddings at depth " + std::to_string(dim_of(d)) +
                                  " come from different extractors ('" + *extractor + "' vs '" +
                                  meta.extractor_id + "')");
        extractor = meta.extractor_id;
    }

    static nlohmann::json error_report_json(const std::string& run, const ErrorReport& rep) {
        return {{"run", run},
                {"per_class_error", rep.per_class_error},
                {"macro_error_excluding", rep.macro_error_excluding},
                {"micro_error_excluding", rep.micro_error_excluding},
                {"support", rep.support},
                {"misclassified", rep.misclassified}};
    }

    RunConfig cfg_;
    std::map<std::string, Manifest> manifests_;
    std::vector<std::string> warnings_;
};

inline GapReport run_full(const RunConfig& config) { return Pipeline(config).run(); }

/// Runs only the color stage.
inline GapReport run_color_gap(RunConfig config) {
    config.stages = {"color"};
    return Pipeline(std::move(config)).run();
}

/// Writes report.json and every auxiliary file into `out_dir`. Files are
/// staged in a temporary directory first, so a failed write leaves no
/// partial report behind.
inline void write_report(const GapReport& report, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path staging = out_dir / ".domgap_staging";
    fs::remove_all(staging);
    fs::create_directories(staging);
    auto put = [&](const std::string& name, const std::string& content) {
        std::ofstream out(staging / name, std::ios::binary);
        if (!out) throw IoError("cannot write " + (staging / name).string());
        out << content;
        if (!out) throw IoError("write failed: " + (staging / name).string());
    };
    try {
        put("report.json", report.to_json().dump(2) + "\n");
        for (const auto& [name, content] : report.files) put(name, content);
        for (const auto& entry : fs::directory_iterator(staging))
            fs::rename(entry.path(), out_dir / entry.path().filename());
    } catch (...) {
        fs::remove_all(staging);
        throw;
    }
    fs::remove_all(staging);
}

}  // namespace domgap
