// ctlab: deterministic experiment runner.
//   ctlab <verify-hyp2|walk-stats|solv-qg|height-fiber> [--config F] [--seed S]
//         [--out DIR] [--workers N] [--format csv|json]
// Exit 0 when every check passes, 1 on a failed check, 2 on usage or config errors.

#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "ctlab/experiments.hpp"

namespace {

struct Options {
    std::string config, out = "out", format = "json";
    std::optional<std::uint64_t> seed;
    int workers = 0;
};

ctlab::json load_config(const ctlab::Command& cmd, const Options& o) {
    ctlab::json cfg = cmd.defaults();
    if (!o.config.empty()) {
        std::ifstream f(o.config);
        if (!f) throw ctlab::ConfigError("cannot read config " + o.config);
        ctlab::json user;
        try {
            user = ctlab::json::parse(f);
        } catch (const ctlab::json::parse_error& e) {
            throw ctlab::ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        cfg = ctlab::merge_config(cfg, user);
    }
    if (o.seed) cfg["seed"] = *o.seed;
    return cfg;
}

int run(const ctlab::Command& cmd, const Options& o) {
    ctlab::RunReport rep;
    try {
        auto cfg = load_config(cmd, o);
        int workers = o.workers > 0 ? o.workers : cfg["workers"].get<int>();
        if (workers <= 0) workers = int(std::max(1u, std::thread::hardware_concurrency()));
        rep = cmd.run(cfg, workers);
    } catch (const ctlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ctlab::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid parameters: " << e.what() << "\n";
        return 2;
    } catch (const ctlab::WalkError& e) {
        std::cerr << "invalid walk: " << e.what() << "\n";
        return 2;
    }
    ctlab::print_human(std::cout, rep);
    for (const auto& p : ctlab::write_artifacts(rep, o.out, o.format)) std::cout << "wrote " << p.string() << "\n";
    return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ctlab experiment runner"};
    app.require_subcommand(1);
    Options o;
    int code = 0;
    for (const auto& cmd : ctlab::commands()) {
        auto* sub = app.add_subcommand(cmd.name);
        sub->add_option("--config", o.config, "JSON config with schema_version");
        sub->add_option("--seed", o.seed, "override the config seed");
        sub->add_option("--out", o.out, "artifact directory")->capture_default_str();
        sub->add_option("--workers", o.workers, "worker threads (0: config, then hardware)")->check(CLI::NonNegativeNumber);
        sub->add_option("--format", o.format, "artifact format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
        sub->callback([&, name = cmd.name] { code = run(ctlab::command(name), o); });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return code;
}
