// domgap: measure the domain gap between image collections.
//
//   domgap ingest  --manifest M.json [--class deer --count 44 --seed 0] [--out OUT.json]
//   domgap split   --manifest M.json --image-root DIR [--threshold 0.02] [--out OUT.json]
//   domgap color-gap|texture-gap|fid|classify-report|full --config run.json [--out-dir DIR]
//   domgap validate-emb FILE... [--depth 2048]

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "domgap/domgap.hpp"

namespace {

int fail(const std::string& stage, const std::string& message) {
    nlohmann::json err{{"error", {{"stage", stage}, {"message", message}}}};
    std::cerr << err.dump() << std::endl;
    return 2;
}

nlohmann::json manifest_summary(const domgap::Manifest& m) {
    std::map<std::string, std::size_t> per_class, per_day_night;
    std::size_t with_bbox = 0;
    for (const auto& r : m.records) {
        ++per_class[r.class_label.empty() ? "(unlabeled)" : r.class_label];
        ++per_day_night[domgap::to_string(r.day_night)];
        if (r.bbox) ++with_bbox;
    }
    return {{"records", m.records.size()},      {"records_with_bbox", with_bbox},
            {"categories", m.categories.size()}, {"locations", m.locations.size()},
            {"per_class", per_class},            {"day_night", per_day_night},
            {"warnings", m.warnings}};
}

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> workers;
    bool per_image_mean = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Override the top-level seed");
    cmd->add_option("--out-dir", f.out_dir, "Override the output directory");
    cmd->add_option("--workers", f.workers, "Worker threads for per-image work");
    cmd->add_flag("--per-image-mean", f.per_image_mean,
                  "Color correlation as the mean over per-image pairs");
}

int run_stages(const RunFlags& f, const std::vector<std::string>& stages) {
    domgap::RunConfig cfg;
    try {
        cfg = domgap::load_config(f.config);
    } catch (const std::exception& e) {
        return fail("config", e.what());
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.workers) cfg.workers = std::max<std::size_t>(1, *f.workers);
    if (f.per_image_mean) cfg.color.per_image_mean = true;
    if (!stages.empty()) cfg.stages = stages;
    const std::filesystem::path out_dir = f.out_dir ? std::filesystem::path(*f.out_dir) : cfg.resolve(cfg.out_dir);

    domgap::GapReport report;
    try {
        report = domgap::run_full(cfg);
    } catch (const domgap::StageError& e) {
        return fail(e.stage(), e.cause());
    } catch (const std::exception& e) {
        return fail("run", e.what());
    }
    try {
        domgap::write_report(report, out_dir);
    } catch (const std::exception& e) {
        return fail("output", e.what());
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << (out_dir / "report.json").string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain-gap measurements between synthetic, translated and real image collections"};
    app.require_subcommand(1);

    // ingest
    std::string ingest_manifest, ingest_out, ingest_class;
    std::optional<std::size_t> ingest_count;
    std::uint64_t ingest_seed = 0;
    auto* ingest = app.add_subcommand("ingest", "Parse and validate a manifest; optionally subsample a class");
    ingest->add_option("--manifest", ingest_manifest, "COCO-CameraTraps JSON")->required()->check(CLI::ExistingFile);
    ingest->add_option("--class", ingest_class, "Class to subsample");
    ingest->add_option("--count", ingest_count, "Records of --class to keep");
    ingest->add_option("--seed", ingest_seed, "Subsampling seed");
    ingest->add_option("--out", ingest_out, "Write the normalized manifest here");

    // split
    std::string split_manifest, split_root, split_out;
    double split_threshold = 0.02;
    std::size_t split_workers = 1;
    auto* split = app.add_subcommand("split", "Tag records day or night");
    split->add_option("--manifest", split_manifest, "COCO-CameraTraps JSON")->required()->check(CLI::ExistingFile);
    split->add_option("--image-root", split_root, "Directory that file_name entries are relative to");
    split->add_option("--threshold", split_threshold, "Grayscale threshold as a fraction of 255");
    split->add_option("--workers", split_workers, "Worker threads");
    split->add_option("--out", split_out, "Write the tagged manifest here");

    // stage verbs
    const std::vector<std::pair<std::string, std::vector<std::string>>> verbs = {
        {"color-gap", {"color"}},
        {"texture-gap", {"texture"}},
        {"fid", {"fid"}},
        {"classify-report", {"classification"}},
        {"full", {}},
    };
    std::map<std::string, RunFlags> flags;
    std::map<std::string, CLI::App*> verb_cmds;
    for (const auto& [verb, _] : verbs) {
        auto* cmd = app.add_subcommand(verb, verb == "full" ? "Run every configured stage"
                                                            : "Run the " + verb + " stage only");
        add_run_flags(cmd, flags[verb]);
        verb_cmds[verb] = cmd;
    }

    // validate-emb
    std::vector<std::string> emb_files;
    std::optional<int> emb_depth;
    auto* validate = app.add_subcommand("validate-emb", "Check EMB1 embedding files");
    validate->add_option("files", emb_files, "EMB1 files")->required();
    validate->add_option("--depth", emb_depth, "Expected depth label (64, 192, 768, 2048)");

    CLI11_PARSE(app, argc, argv);

    if (ingest->parsed()) {
        try {
            auto m = domgap::parse_manifest(ingest_manifest);
            if (!ingest_class.empty() || ingest_count) {
                if (ingest_class.empty() || !ingest_count)
                    return fail("ingest", "--class and --count must be given together");
                m = domgap::subsample_class(m, ingest_class, *ingest_count, ingest_seed);
            }
            if (!ingest_out.empty()) domgap::write_manifest(m, ingest_out);
            std::cout << manifest_summary(m).dump(2) << '\n';
        } catch (const std::exception& e) {
            return fail("ingest", e.what());
        }
        return 0;
    }
    if (split->parsed()) {
        try {
            auto m = domgap::parse_manifest(split_manifest);
            const auto root = split_root.empty() ? std::filesystem::path(split_manifest).parent_path()
                                                 : std::filesystem::path(split_root);
            m = domgap::split_day_night(m, split_threshold, root, std::max<std::size_t>(1, split_workers));
            if (!split_out.empty()) domgap::write_manifest(m, split_out);
            std::cout << manifest_summary(m).dump(2) << '\n';
        } catch (const std::exception& e) {
            return fail("split", e.what());
        }
        return 0;
    }
    if (validate->parsed()) {
        std::optional<domgap::Depth> depth;
        if (emb_depth) {
            depth = domgap::depth_from_int(*emb_depth);
            if (!depth) return fail("validate-emb", "--depth must be one of 64, 192, 768, 2048");
        }
        nlohmann::json out = nlohmann::json::array();
        for (const auto& f : emb_files) {
            try {
                const auto m = domgap::read_embeddings(f);
                nlohmann::json entry{{"file", f}, {"n", m.n}, {"dim", m.dim}};
                if (depth) domgap::EmbeddingSet(*depth, m);
                const auto side = domgap::sidecar_path(f);
                if (std::filesystem::exists(side)) {
                    const auto meta = domgap::read_sidecar(side);
                    if (meta.depth_label != static_cast<int>(m.dim))
                        return fail("validate-emb", f + ": sidecar depth_label does not match dim");
                    entry["extractor_id"] = meta.extractor_id;
                    entry["source_collection"] = meta.source_collection;
                }
                out.push_back(std::move(entry));
            } catch (const std::exception& e) {
                return fail("validate-emb", e.what());
            }
        }
        std::cout << out.dump(2) << '\n';
        return 0;
    }
    for (const auto& [verb, stages] : verbs)
        if (verb_cmds.at(verb)->parsed()) return run_stages(flags.at(verb), stages);
    return 1;
}
