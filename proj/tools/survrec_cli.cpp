#include "survrec/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace survrec;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config JSON")->required();
    cmd->add_option("--seed", args.seed, "master seed (overrides config)");
    cmd->add_option("--workers", args.workers, "worker threads (overrides config)");
    cmd->add_option("--out", args.out, "output directory (overrides config)");
}

PipelineConfig resolve_config(const CommonArgs& args) {
    PipelineConfig config = load_pipeline_config(args.config_path);
    if (args.seed) config.seed = *args.seed;
    if (args.workers) config.workers = *args.workers;
    if (args.out) config.out_dir = *args.out;
    if (config.workers < 1) throw ValidationError("workers must be at least 1");
    return config;
}

int run_stage(const CommonArgs& args, Stage stop_after) {
    PipelineConfig config;
    try {
        config = resolve_config(args);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        const PipelineReport report = run_pipeline(config, stop_after);
        const auto written = emit_report(report, config.out_dir);
        for (const auto& p : written) std::cout << "wrote " << p << "\n";
        if (!report.errors.empty()) {
            for (const auto& e : report.errors)
                std::cerr << "stage " << e.stage << " failed: " << e.message << "\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return 1;
    }
}

void write_dataset_csv(const SurvivalDataset& data, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw ParseError("cannot write: " + csv_path);
    out.precision(12);
    for (const auto& f : data.schema) out << f.name << ",";
    out << "time,event\n";
    for (Index i = 0; i < data.n(); ++i) {
        for (Index j = 0; j < data.n_features(); ++j) {
            const auto& f = data.schema[static_cast<std::size_t>(j)];
            if (f.is_categorical())
                out << f.levels[static_cast<std::size_t>(data.raw(i, j))];
            else
                out << data.raw(i, j);
            out << ",";
        }
        out << data.time[i] << "," << data.event[i] << "\n";
    }
}

void write_schema_json(const Schema& schema, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& f : schema)
        j.push_back({{"name", f.name},
                     {"kind", to_string(f.kind)},
                     {"levels", f.levels}});
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write: " + path);
    out << j.dump(2) << "\n";
}

int run_synth(const CommonArgs& args) {
    PipelineConfig config;
    try {
        config = resolve_config(args);
        if (!config.synthetic)
            throw ValidationError("synth needs a \"synthetic\" block in the config");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        const auto data =
            generate_synthetic(*config.synthetic, derive_seed(config.seed, "synth"));
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(config.out_dir, ec);
        if (ec) throw ParseError("cannot create output directory: " + config.out_dir);
        const auto csv = (fs::path(config.out_dir) / "synthetic.csv").string();
        const auto schema =
            (fs::path(config.out_dir) / "synthetic.schema.json").string();
        write_dataset_csv(data, csv);
        write_schema_json(data.schema, schema);
        std::cout << "wrote " << csv << "\nwrote " << schema << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "synth error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "survrec: exploratory survival modelling with attribution-driven "
        "model recommendations"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        Stage stop_after;
    };
    const Sub subs[] = {
        {"run", "full pipeline: baseline, exploration, recommendations, augmentation",
         Stage::Full},
        {"baseline", "fit and evaluate the baseline Cox model only", Stage::Baseline},
        {"explore", "fit the exploratory forest and select extreme cohorts",
         Stage::Explore},
        {"recommend", "run through attribution and recommendation generation",
         Stage::Recommend},
        {"augment", "run the full pipeline including augmented model fits", Stage::Full},
        {"evaluate", "run the full pipeline and emit all evaluation reports",
         Stage::Full},
    };

    std::vector<CommonArgs> arg_sets(std::size(subs) + 1);
    std::vector<CLI::App*> cmds;
    for (std::size_t i = 0; i < std::size(subs); ++i) {
        auto* cmd = app.add_subcommand(subs[i].name, subs[i].help);
        add_common(cmd, arg_sets[i]);
        cmds.push_back(cmd);
    }
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, arg_sets.back());

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    for (std::size_t i = 0; i < std::size(subs); ++i)
        if (cmds[i]->parsed()) return run_stage(arg_sets[i], subs[i].stop_after);
    if (synth->parsed()) return run_synth(arg_sets.back());
    return 2;
}
