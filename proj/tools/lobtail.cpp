#include "lobtail/errors.hpp"
#include "lobtail/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <optional>

namespace pl = lobtail::pipeline;

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::string orderbook;
    std::string messages;
    std::string ticker;
    std::vector<int> depths;
    std::optional<std::uint64_t> seed;
    std::optional<int> n_scenarios;
    std::optional<int> horizon;
    std::string innovation;
    std::optional<double> burn_in;
    std::optional<double> tail_fraction;
    std::optional<double> events_per_year;
    std::optional<double> rate;
    bool force = false;
};

// LOBSTER names start with the ticker: AAPL_2012-06-21_34200000_57600000_orderbook_10.csv
std::string ticker_from(const std::string& path)
{
    const std::string stem = pl::fs::path(path).filename().string();
    const auto cut = stem.find_first_of("_.");
    return stem.substr(0, cut);
}

pl::Config resolve(const Overrides& o)
{
    pl::Config c = o.config.empty() ? pl::default_config() : pl::load_config(o.config);
    if (!o.orderbook.empty()) {
        pl::TickerInput in;
        in.orderbook = o.orderbook;
        in.messages = o.messages;
        in.ticker = o.ticker.empty() ? ticker_from(o.orderbook) : o.ticker;
        c.inputs = {in};
    } else if (!o.messages.empty() || !o.ticker.empty()) {
        throw lobtail::ConfigError("--messages and --ticker need --orderbook");
    }
    if (!o.out.empty()) c.output_dir = o.out;
    if (!o.depths.empty()) {
        c.depths = o.depths;
        c.pricing.depths.clear();
    }
    if (o.seed) c.seed = *o.seed;
    if (o.n_scenarios) c.n_scenarios = *o.n_scenarios;
    if (o.horizon) c.horizon = *o.horizon;
    if (!o.innovation.empty()) c.innovation = lobtail::parse_innovation(o.innovation);
    if (o.burn_in) c.burn_in_fraction = *o.burn_in;
    if (o.tail_fraction) c.tail_fraction = *o.tail_fraction;
    if (o.events_per_year) c.pricing.events_per_year = *o.events_per_year;
    if (o.rate) c.pricing.rate = *o.rate;
    return c;
}

void report(const pl::RunManifest& m, const std::vector<pl::Stage>& stages)
{
    for (pl::Stage s : stages) {
        const auto it = m.stages.find(std::string(pl::to_string(s)));
        if (it == m.stages.end()) continue;
        std::printf("%-14s %-8s %8.2fs  %zu outputs\n", std::string(pl::to_string(s)).c_str(),
                    it->second.skipped ? "skipped" : "ran", it->second.wall_s, it->second.outputs.size());
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Limit-order-book spread index tail analytics"};
    app.set_version_flag("--version", std::string(pl::kToolVersion));
    app.require_subcommand(1);

    Overrides o;
    app.add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", o.out, "output directory");
    app.add_option("--orderbook", o.orderbook, "order book CSV (replaces the configured inputs)");
    app.add_option("--messages", o.messages, "LOBSTER message file matching --orderbook");
    app.add_option("--ticker", o.ticker, "ticker for --orderbook (default: file name prefix)");
    app.add_option("--depths", o.depths, "depths to analyse, e.g. --depths 1 5 10")->delimiter(',');
    app.add_option("--seed", o.seed, "simulation seed");
    app.add_option("--n-scenarios", o.n_scenarios, "simulated scenarios");
    app.add_option("--horizon", o.horizon, "simulation horizon in events");
    app.add_option("--innovation", o.innovation, "innovation family: nig, student_t, ged, normal");
    app.add_option("--burn-in", o.burn_in, "fraction of the session dropped at the start");
    app.add_option("--tail-fraction", o.tail_fraction, "tail fraction for GPD and Hill");
    app.add_option("--events-per-year", o.events_per_year, "time scale for option pricing (0: events x 252)");
    app.add_option("--rate", o.rate, "risk-free rate for option pricing");
    app.add_flag("--force", o.force, "rerun stages even when their inputs are unchanged");

    std::vector<pl::Stage> selected;
    for (pl::Stage s : pl::all_stages())
        app.add_subcommand(std::string(pl::to_string(s)), "run the " + std::string(pl::to_string(s)) + " stage")
            ->callback([&selected, s] { selected = {s}; });
    app.add_subcommand("run-all", "run every stage in order")->callback([&selected] { selected = pl::all_stages(); });
    bool show = false;
    app.add_subcommand("show-config", "print the resolved config as JSON")->callback([&show] { show = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const pl::Config cfg = resolve(o);
        if (show) {
            std::cout << pl::to_json(cfg) << '\n';
            return 0;
        }
        const auto m = pl::run(cfg, selected, {o.force});
        report(m, selected);
        std::printf("manifest: %s\n", pl::manifest_path(cfg).string().c_str());
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return lobtail::exit_code_for(e);
    }
}
