// perfadapt: train, adapt, evaluate, sweep and benchmark from the command line.

#include "perfadapt/errors.hpp"
#include "perfadapt/harness.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace {

using namespace perfadapt;

struct Flags {
    std::string config;
    std::string data;
    std::string test;
    std::string measure;
    std::string c_grid;
    std::string b_grid;
    double epsilon = 0.1;
    std::size_t max_iterations = 5000;
    std::vector<std::string> aux;
    std::size_t folds = 5;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    std::string out;
    bool strict = false;
    std::string model;
    std::vector<std::string> aux_pred;
    std::string audit_log;
};

struct Options {
    CLI::Option *data = nullptr;
    CLI::Option *test = nullptr;
    CLI::Option *measure = nullptr;
    CLI::Option *c_grid = nullptr;
    CLI::Option *b_grid = nullptr;
    CLI::Option *epsilon = nullptr;
    CLI::Option *max_iterations = nullptr;
    CLI::Option *aux = nullptr;
    CLI::Option *folds = nullptr;
    CLI::Option *seed = nullptr;
    CLI::Option *jobs = nullptr;
    CLI::Option *out = nullptr;
    CLI::Option *strict = nullptr;
    CLI::Option *model = nullptr;
    CLI::Option *aux_pred = nullptr;
};

void add_shared(CLI::App &cmd, Flags &f, Options &o) {
    cmd.add_option("--config", f.config, "TOML config file; command-line flags override it");
    o.data = cmd.add_option("--data", f.data, "training data (SVMlight format)");
    o.test = cmd.add_option("--test", f.test, "test data (SVMlight format)");
    o.measure = cmd.add_option("--measure", f.measure, "err | f1 | prbep | auc");
    o.c_grid = cmd.add_option("-C", f.c_grid, "C grid: list, 2^k, or 2^a:2^b (default 2^-7:2^7)");
    o.b_grid = cmd.add_option("-B", f.b_grid, "B value (grid for sweep; default 1)");
    o.epsilon = cmd.add_option("--epsilon", f.epsilon, "cutting-plane tolerance on the 0..100 loss scale (default 0.1)");
    o.max_iterations = cmd.add_option("--max-iterations", f.max_iterations, "outer iteration limit (default 5000)");
    o.aux = cmd.add_option("--aux", f.aux, "auxiliary: tree[:depth=12,min_leaf=5], sgd[:lambda=1e-4,epochs=20], pred:<train>[,test=<path>]");
    o.folds = cmd.add_option("--folds", f.folds, "cross-validation folds (default 5)");
    o.seed = cmd.add_option("--seed", f.seed, "fold shuffling seed (default 1)");
    o.jobs = cmd.add_option("--jobs", f.jobs, "worker threads (default 1)");
    o.out = cmd.add_option("--out", f.out, "directory for report.json, report.txt and model.json");
    o.strict = cmd.add_flag("--strict", f.strict, "exit with code 4 if any training run hit the iteration limit");
    cmd.add_option("--audit-log", f.audit_log, "write the file-access and phase log here");
}

ExperimentConfig build_config(const Flags &f, const Options &o) {
    ExperimentConfig config;
    if (!f.config.empty()) {
        load_config_file(f.config, config);
    }
    if (o.data->count() > 0) {
        config.data = f.data;
    }
    if (o.test->count() > 0) {
        config.test = f.test;
    }
    if (o.measure->count() > 0) {
        config.measure = parse_measure(f.measure);
    }
    if (o.c_grid->count() > 0) {
        config.c_grid = parse_grid(f.c_grid);
    }
    if (o.b_grid->count() > 0) {
        config.b_grid = parse_grid(f.b_grid);
    }
    if (o.epsilon->count() > 0) {
        config.epsilon = f.epsilon;
    }
    if (o.max_iterations->count() > 0) {
        config.max_iterations = f.max_iterations;
    }
    if (o.aux->count() > 0) {
        config.aux.clear();
        for (const auto &spec : f.aux) {
            config.aux.push_back(parse_aux_spec(spec));
        }
    }
    if (o.folds->count() > 0) {
        config.folds = f.folds;
    }
    if (o.seed->count() > 0) {
        config.seed = f.seed;
    }
    if (o.jobs->count() > 0) {
        config.jobs = f.jobs;
    }
    if (o.out->count() > 0) {
        config.out = f.out;
    }
    if (o.strict->count() > 0) {
        config.strict = f.strict;
    }
    if (o.model != nullptr && o.model->count() > 0) {
        config.model = f.model;
    }
    if (o.aux_pred != nullptr && o.aux_pred->count() > 0) {
        config.aux_predictions.assign(f.aux_pred.begin(), f.aux_pred.end());
    }
    return config;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{ "Structural training for non-decomposable measures and adaptation of auxiliary classifiers" };
    app.require_subcommand(1);

    Flags flags;
    std::map<std::string, Options> opts;
    std::string command;
    const auto add_command = [&](const char *name, const char *help) -> CLI::App & {
        CLI::App &cmd = *app.add_subcommand(name, help);
        add_shared(cmd, flags, opts[name]);
        cmd.callback([&command, name] { command = name; });
        return cmd;
    };
    add_command("train", "linear structural training with cross-validated C");
    add_command("adapt", "adapt auxiliary classifiers with cross-validated C");
    CLI::App &eval = add_command("eval", "evaluate a saved model on a dataset");
    opts["eval"].model = eval.add_option("--model", flags.model, "model.json written by train or adapt");
    opts["eval"].aux_pred = eval.add_option("--aux-pred", flags.aux_pred, "predictions file for each external-prediction auxiliary, in order");
    add_command("sweep", "train once per grid point (C and, with auxiliaries, B)");
    add_command("bench", "inference counts of plain versus adapted training per C");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    AuditLog audit;
    std::optional<ScopedFileAudit> audit_scope;
    if (!flags.audit_log.empty()) {
        audit_scope.emplace(audit);
    }
    const auto flush_audit = [&] {
        if (!flags.audit_log.empty()) {
            std::ofstream log{ flags.audit_log };
            for (const auto &event : audit.events()) {
                log << event << '\n';
            }
        }
    };

    try {
        const ExperimentConfig config = build_config(flags, opts.at(command));
        RunOutcome outcome;
        if (command == "train") {
            outcome = run_train(config, &audit);
        } else if (command == "adapt") {
            outcome = run_adapt(config, &audit);
        } else if (command == "eval") {
            outcome = run_eval(config, &audit);
        } else if (command == "sweep") {
            outcome = run_sweep(config, &audit);
        } else {
            outcome = run_bench(config, &audit);
        }
        flush_audit();
        if (!config.out.empty()) {
            write_outcome(config.out, outcome);
        }
        std::cout << outcome.table;
        if (config.strict && outcome.nonconverged > 0) {
            std::cerr << "error: " << outcome.nonconverged << " training run(s) stopped at the iteration limit\n";
            return 4;
        }
        return 0;
    } catch (const std::exception &e) {
        flush_audit();
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}
