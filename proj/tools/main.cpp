#include "cli.hpp"

#include "battkit/error.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

using namespace battkit::cli;

int main(int argc, char** argv) {
    CLI::App app{"battkit: battery telemetry analytics"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    Options o;
    std::optional<std::uint64_t> seed;
    app.add_option("--input", g.input, "Input file or directory");
    app.add_option("--config", g.config, "JSON config file; flags override it");
    app.add_option("--seed", seed, "Seed for every random choice (default 1)");
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("-v,--verbose", g.verbosity, "Progress messages on stderr");

    std::function<int()> action;
    auto leaf = [&](CLI::App* parent, const char* name, const char* help, int (*fn)(const Globals&, const Options&)) {
        auto* sub = parent->add_subcommand(name, help);
        sub->fallthrough();
        sub->callback([&action, fn, &g, &o] { action = [fn, &g, &o] { return fn(g, o); }; });
        return sub;
    };
    auto capacity = [&](CLI::App* sub) { sub->add_option("--capacity", o.capacity, "Nominal capacity, Ah"); };

    capacity(leaf(&app, "ingest", "Parse, clean and segment a telemetry file", run_ingest));
    auto* synth = leaf(&app, "synth", "Emit a synthetic fleet from a JSON scenario", run_synth);
    synth->add_option("--scenario", g.input, "Scenario JSON (same as --input)");

    auto* soc = app.add_subcommand("soc", "State of charge");
    soc->require_subcommand(1);
    soc->fallthrough();
    auto* train = leaf(soc, "train", "Train the SOC network on a synthetic data directory", run_soc_train);
    train->add_option("--data", o.data, "Directory written by synth");
    train->add_option("--epochs", o.epochs, "Maximum LM epochs");
    auto* eval = leaf(soc, "eval", "Evaluate a trained network on a synthetic data directory", run_soc_eval);
    eval->add_option("--data", o.data, "Directory written by synth");
    eval->add_option("--model", o.model, "network.json")->required();
    auto* predict = leaf(soc, "predict", "SOC trace for a telemetry file", run_soc_predict);
    predict->add_option("--model", o.model, "network.json")->required();
    capacity(predict);

    auto* soh = app.add_subcommand("soh", "State of health");
    soh->require_subcommand(1);
    soh->fallthrough();
    capacity(leaf(soh, "gate", "Report the charge-window gate for each segment", run_soh_gate));
    capacity(leaf(soh, "curves", "IC/DV curves for each segment", run_soh_curves));
    auto* cal = leaf(soh, "calibrate", "Build the feature LUT from a synthetic data directory", run_soh_calibrate);
    cal->add_option("--data", o.data, "Directory written by synth");
    auto* est = leaf(soh, "estimate", "Estimate SOH from a telemetry file", run_soh_estimate);
    est->add_option("--lut", o.lut, "lut.txt from soh calibrate")->required();
    capacity(est);

    auto* th = app.add_subcommand("thermal", "Thermal anomaly detection");
    th->require_subcommand(1);
    th->fallthrough();
    auto* watch = leaf(th, "watch", "Continue detection from a saved state", run_thermal_watch);
    watch->add_option("--state", o.state, "State file (default <out>/state.json)");
    leaf(th, "replay", "Run detection over a whole file from an empty state", run_thermal_replay);

    auto* report = leaf(&app, "report", "Collect run reports under a directory", run_report);
    report->add_flag("--svg", o.svg, "Also render two-column data files as SVG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }
    if (seed) {
        g.seed = *seed;
        g.seed_given = true;
    }

    try {
        return action ? action() : kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const GatedError& e) {
        std::cerr << e.what() << "\n";
        return kExitGated;
    } catch (const battkit::Error& e) {
        std::cerr << "error [" << e.module() << "]: " << e.what() << "\n";
        return kExitModuleError;
    } catch (const std::exception& e) {
        std::cerr << "error [cli]: " << e.what() << "\n";
        return kExitModuleError;
    }
}
