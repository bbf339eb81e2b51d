// qtraj command-line runner.
//
//   qtraj check     --gallery qnd --gamma 1 --out out/check
//   qtraj invariant --gallery thermal_jump --a 2 --b 1 --horizon 2000 --seed 1 --out out/inv
//   qtraj mixing    --gallery qnd --horizon 8 --samples 500 --seed 1 --out out/mix
//   qtraj ftrace | coupling | purify ...
//   qtraj gallery list
//   qtraj gallery run qnd --seed 1 --out out/qnd
//
// Options can also come from --config file.json (same keys as the echoed
// config.json); explicit flags win.

#include "qtraj/experiments.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace qtraj;

namespace {

struct ExperimentConfig {
    std::string command;
    std::string gallery;
    std::string model_path;
    double gamma = 1.0, a = 2.0, b = 1.0;
    double dt = 1e-3;
    double horizon = 10.0;
    std::size_t samples = 1000;
    double burn_in = -1.0;
    double thin = 0.5;
    std::optional<std::uint64_t> seed;
    std::string out = "qtraj_out";
    unsigned threads = default_threads();
    std::vector<double> t_grid;
    int points = 21;
    int m_atoms = 500;
    std::string init_a = "point";
    std::string init_b = "circle";
    std::string scheme = "linear_normalize";
    double max_jump_prob = 0.1;
    int restarts = 200;
    std::size_t replicates = 1;

    json to_json() const {
        json j{{"format_version", kFormatVersion},
               {"command", command},
               {"gamma", gamma},
               {"a", a},
               {"b", b},
               {"dt", dt},
               {"horizon", horizon},
               {"samples", samples},
               {"burn_in", burn_in},
               {"thin", thin},
               {"seed", seed ? json(*seed) : json(nullptr)},
               {"t_grid", t_grid},
               {"points", points},
               {"m_atoms", m_atoms},
               {"init_a", init_a},
               {"init_b", init_b},
               {"scheme", scheme},
               {"max_jump_prob", max_jump_prob},
               {"restarts", restarts},
               {"replicates", replicates}};
        // threads and out are left out on purpose: neither changes results.
        if (!gallery.empty()) j["gallery"] = gallery;
        if (!model_path.empty()) j["model"] = model_path;
        return j;
    }
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key) && !j[key].is_null()) dst = j[key].get<T>();
}

void apply_config_file(const std::string& path, ExperimentConfig& c, const CLI::App& app) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
    auto unset = [&](const char* flag) {
        const CLI::Option* o = app.get_option_no_throw(flag);
        return o == nullptr || o->count() == 0;
    };
    try {
        if (unset("--gallery")) take(j, "gallery", c.gallery);
        if (unset("--model")) take(j, "model", c.model_path);
        if (unset("--gamma")) take(j, "gamma", c.gamma);
        if (unset("--a")) take(j, "a", c.a);
        if (unset("--b")) take(j, "b", c.b);
        if (unset("--dt")) take(j, "dt", c.dt);
        if (unset("--horizon")) take(j, "horizon", c.horizon);
        if (unset("--samples")) take(j, "samples", c.samples);
        if (unset("--burn-in")) take(j, "burn_in", c.burn_in);
        if (unset("--thin")) take(j, "thin", c.thin);
        if (unset("--seed") && j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
        if (unset("--out")) take(j, "out", c.out);
        if (unset("--t-grid")) take(j, "t_grid", c.t_grid);
        if (unset("--points")) take(j, "points", c.points);
        if (unset("--atoms")) take(j, "m_atoms", c.m_atoms);
        if (unset("--init-a")) take(j, "init_a", c.init_a);
        if (unset("--init-b")) take(j, "init_b", c.init_b);
        if (unset("--scheme")) take(j, "scheme", c.scheme);
        if (unset("--max-jump-prob")) take(j, "max_jump_prob", c.max_jump_prob);
        if (unset("--restarts")) take(j, "restarts", c.restarts);
        if (unset("--replicates")) take(j, "replicates", c.replicates);
    } catch (const json::exception& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
}

struct Loaded {
    OperatorModel model;
    std::optional<NamedExample> example;
};

Loaded load(const ExperimentConfig& c) {
    if (c.gallery.empty() == c.model_path.empty()) throw UsageError("give exactly one of --gallery or --model");
    if (!c.gallery.empty()) {
        GalleryParams p;
        p.gamma = c.gamma;
        p.a = c.a;
        p.b = c.b;
        NamedExample ex = gallery_example(c.gallery, p);
        return {ex.model, ex};
    }
    return {load_model(c.model_path), std::nullopt};
}

SimConfig sim_config(const ExperimentConfig& c, bool stochastic) {
    if (stochastic && !c.seed) throw UsageError("--seed is required for this command");
    SimConfig s;
    s.dt = c.dt;
    s.horizon = c.horizon;
    s.seed = c.seed.value_or(0);
    s.max_jump_prob = c.max_jump_prob;
    if (c.scheme == "linear_normalize") {
        s.scheme = Scheme::linear_normalize;
    } else if (c.scheme == "euler_direct") {
        s.scheme = Scheme::euler_direct;
    } else {
        throw UsageError("unknown scheme " + c.scheme);
    }
    s.validate();
    return s;
}

std::vector<double> time_grid(const ExperimentConfig& c) {
    if (!c.t_grid.empty()) return c.t_grid;
    return linear_grid(0.0, c.horizon, c.points);
}

ProjectivePoint start_of(const Loaded& l) {
    if (l.example) return l.example->default_start;
    return ProjectivePoint::basis(l.model.dim(), 0);
}

InitialLaw law_of(const std::string& name, const Loaded& l) {
    if (name == "point") return InitialLaw::at(start_of(l));
    if (name == "circle") {
        if (l.model.dim() != 2) throw UsageError("circle initial law needs a qubit model");
        return InitialLaw::circle();
    }
    if (name == "haar") return InitialLaw::haar();
    if (name.rfind("basis", 0) == 0) {
        const int i = std::atoi(name.c_str() + 5);
        if (i < 0 || i >= l.model.dim()) throw UsageError("basis index out of range in " + name);
        return InitialLaw::at(ProjectivePoint::basis(l.model.dim(), i));
    }
    throw UsageError("unknown initial law " + name + " (point, circle, haar, basisN)");
}

json fit_json(const std::optional<RateFit>& f) { return f ? to_json(*f) : json(nullptr); }

void echo_config(const ExperimentConfig& c) { write_json(fs::path(c.out) / "config.json", c.to_json()); }

// ---------------------------------------------------------------------------

int cmd_check(const ExperimentConfig& c) {
    const Loaded l = load(c);
    PurOptions opt;
    opt.restarts = c.restarts;
    opt.seed = c.seed.value_or(0);
    opt.threads = c.threads;
    const CheckResult r = run_check(l.model, opt);
    json j = r.to_json();
    j["format_version"] = kFormatVersion;
    echo_config(c);
    write_json(fs::path(c.out) / "check.json", j);
    std::cout << "erg: " << (r.erg.holds ? "holds" : "fails") << " (zero multiplicity " << r.erg.zero_multiplicity
              << ", gap " << r.erg.spectral_gap << ")\n"
              << "pur: " << to_string(r.pur.verdict) << " [" << r.pur.method << "]"
              << (r.pur.note.empty() ? "" : " " + r.pur.note) << "\n";
    return 0;
}

int cmd_invariant(const ExperimentConfig& c) {
    const Loaded l = load(c);
    const SimConfig cfg = sim_config(c, true);
    SamplingPlan plan{c.burn_in, c.thin, c.samples};
    const ExpectedBehaviour none;
    const InvariantRun r = run_invariant(l.model, l.example ? l.example->expected : none, start_of(l), cfg, plan,
                                         c.m_atoms);
    echo_config(c);
    write_text(fs::path(c.out) / "samples.csv", measure_csv(r.sample.measure));
    json j{{"format_version", kFormatVersion},
           {"n_samples", r.sample.states.size()},
           {"burn_in", r.sample.burn_in},
           {"thinning", r.sample.thinning},
           {"jump_counts", r.sample.jump_counts},
           {"jumps_after_burn_in", r.sample.jumps_after_burn_in},
           {"degenerate_events", r.sample.degenerate_events},
           {"warnings", r.sample.warnings},
           {"comparison", r.comparison.to_json()}};
    write_json(fs::path(c.out) / "invariant.json", j);
    std::cout << "samples: " << r.sample.states.size() << ", comparison " << r.comparison.kind;
    if (r.comparison.kind != "none") std::cout << " distance " << r.comparison.distance;
    std::cout << "\n";
    for (const auto& w : r.sample.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_mixing(const ExperimentConfig& c) {
    const Loaded l = load(c);
    const SimConfig cfg = sim_config(c, true);
    const auto grid = time_grid(c);
    std::optional<EmpiricalMeasure> ref;
    std::string ref_kind = "none";
    if (l.example) {
        ref = analytic_reference(l.example->expected, c.m_atoms);
        if (ref) ref_kind = "analytic";
    }
    if (!ref && check_l_erg(l.model).holds) {
        // fall back to a sampled invariant measure
        SamplingPlan plan{c.burn_in, c.thin, c.samples};
        ref = sample_invariant(l.model, start_of(l), cfg, plan).measure;
        ref_kind = "sampled";
    }
    const MixingResult r = run_mixing(l.model, law_of(c.init_a, l), law_of(c.init_b, l), grid, c.samples, cfg, ref,
                                      true, c.threads, c.replicates);
    echo_config(c);
    write_text(fs::path(c.out) / "two_ensemble.csv", curve_csv(r.two_ensemble));
    if (ref) write_text(fs::path(c.out) / "to_reference.csv", curve_csv(r.to_reference));
    json j = r.to_json();
    j["format_version"] = kFormatVersion;
    j["reference"] = ref_kind;
    write_json(fs::path(c.out) / "mixing.json", j);
    std::cout << "two-ensemble W1: ";
    if (r.fit) {
        std::cout << "rate " << r.fit->rate << " r2 " << r.fit->r2 << (r.fit->decaying ? "" : " (non-decaying)");
    } else {
        std::cout << "coalesced before a fit was possible";
    }
    std::cout << "\n";
    return 0;
}

int cmd_ftrace(const ExperimentConfig& c) {
    const Loaded l = load(c);
    const SimConfig cfg = sim_config(c, true);
    const FEstimate f = estimate_f(l.model, time_grid(c), c.samples, cfg, c.threads);
    const SubmultiplicativityReport sub = submultiplicativity(f.curve);
    echo_config(c);
    write_text(fs::path(c.out) / "f.csv", curve_csv(f.curve));
    write_json(fs::path(c.out) / "ftrace.json",
               json{{"format_version", kFormatVersion},
                    {"fit", to_json(f.fit)},
                    {"submultiplicativity", {{"pairs", sub.pairs}, {"violations", sub.violations}, {"worst_ratio", sub.worst_ratio}}}});
    std::cout << "f rate " << f.fit.rate << " r2 " << f.fit.r2 << ", submultiplicativity violations " << sub.violations
              << "/" << sub.pairs << "\n";
    return 0;
}

int cmd_coupling(const ExperimentConfig& c) {
    const Loaded l = load(c);
    const SimConfig cfg = sim_config(c, true);
    const auto grid = time_grid(c);
    const int k = l.model.dim();
    const InitialLaw law = law_of(c.init_a, l);
    const CouplingResult r = coupling_distance(
        l.model, [&](Rng& rng) { return law.draw(rng, k); }, grid, c.samples, cfg, c.threads);
    echo_config(c);
    std::ostringstream csv;
    csv << "t,mean,stderr,median\n";
    for (std::size_t g = 0; g < grid.size(); ++g) {
        csv << fmt_double(grid[g]) << ',' << fmt_double(r.mean_distance.value[g]) << ','
            << fmt_double(r.mean_distance.se[g]) << ',' << fmt_double(r.median_distance[g]) << '\n';
    }
    write_text(fs::path(c.out) / "coupling.csv", csv.str());
    write_json(fs::path(c.out) / "coupling.json",
               json{{"format_version", kFormatVersion},
                    {"violations", r.violations},
                    {"fit", fit_json(fit_positive_prefix(r.mean_distance))}});
    std::cout << "pathwise bound violations: " << r.violations << "\n";
    return 0;
}

int cmd_purify(const ExperimentConfig& c) {
    const Loaded l = load(c);
    const SimConfig cfg = sim_config(c, true);
    const Curve p = purification_diagnostic(l.model, time_grid(c), c.samples, cfg, c.threads);
    const auto fit = fit_positive_prefix(p);
    echo_config(c);
    write_text(fs::path(c.out) / "purification.csv", curve_csv(p));
    write_json(fs::path(c.out) / "purify.json",
               json{{"format_version", kFormatVersion}, {"final", p.value.back()}, {"fit", fit_json(fit)}});
    std::cout << "1 - lambda_max at t = " << p.t.back() << ": " << p.value.back() << "\n";
    return 0;
}

int cmd_gallery_list() {
    for (const auto& n : gallery_names()) std::cout << n << "\n";
    return 0;
}

// Writes the model file and runs check, invariant and purify for one example.
int cmd_gallery_run(ExperimentConfig c, const std::string& name) {
    c.gallery = name;
    c.model_path.clear();
    const std::string root = c.out;
    const Loaded l = load(c);
    write_json(fs::path(root) / "model.json", model_to_json(l.model));
    c.out = root + "/check";
    cmd_check(c);
    c.out = root + "/invariant";
    cmd_invariant(c);
    c.out = root + "/purify";
    cmd_purify(c);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum trajectory experiments"};
    app.require_subcommand(1);
    ExperimentConfig c;
    std::string config_path, gallery_name;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--gallery", c.gallery, "gallery example name");
        sub->add_option("--model", c.model_path, "model JSON file");
        sub->add_option("--gamma", c.gamma, "QND measurement strength");
        sub->add_option("--a", c.a, "thermal rate a");
        sub->add_option("--b", c.b, "thermal rate b");
        sub->add_option("--dt", c.dt, "time step");
        sub->add_option("--horizon", c.horizon, "final time (trajectory length for invariant)");
        sub->add_option("--samples", c.samples, "samples or trajectories");
        sub->add_option("--burn-in", c.burn_in, "burn-in time, negative for 10/gap");
        sub->add_option("--thin", c.thin, "thinning interval");
        sub->add_option("--seed", seed, "RNG seed");
        sub->add_option("--out", c.out, "output directory");
        sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--t-grid", c.t_grid, "explicit time grid")->delimiter(',');
        sub->add_option("--points", c.points, "time grid points when --t-grid is absent");
        sub->add_option("--atoms", c.m_atoms, "atoms in the density discretization");
        sub->add_option("--init-a", c.init_a, "first initial law: point, circle, haar, basisN");
        sub->add_option("--init-b", c.init_b, "second initial law");
        sub->add_option("--scheme", c.scheme, "linear_normalize or euler_direct");
        sub->add_option("--max-jump-prob", c.max_jump_prob, "per-step jump probability budget");
        sub->add_option("--restarts", c.restarts, "random restarts for the (Pur) search");
        sub->add_option("--replicates", c.replicates, "independent ensemble pairs averaged by mixing")
            ->check(CLI::PositiveNumber);
    };

    std::vector<std::pair<std::string, CLI::App*>> subs;
    for (const char* name : {"check", "invariant", "mixing", "ftrace", "coupling", "purify"}) {
        CLI::App* sub = app.add_subcommand(name);
        common(sub);
        subs.emplace_back(name, sub);
    }
    CLI::App* gallery = app.add_subcommand("gallery", "named examples");
    gallery->require_subcommand(1);
    CLI::App* glist = gallery->add_subcommand("list");
    CLI::App* grun = gallery->add_subcommand("run");
    grun->add_option("name", gallery_name, "example name")->required();
    common(grun);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (glist->parsed()) return cmd_gallery_list();
        CLI::App* active = grun->parsed() ? grun : nullptr;
        for (auto& [name, sub] : subs) {
            if (sub->parsed()) {
                active = sub;
                c.command = name;
            }
        }
        if (active == grun) c.command = "gallery run";
        if (active->get_option("--seed")->count() > 0) c.seed = seed;
        if (!config_path.empty()) apply_config_file(config_path, c, *active);
        if (c.samples == 0) throw UsageError("--samples must be positive");

        if (c.command == "check") return cmd_check(c);
        if (c.command == "invariant") return cmd_invariant(c);
        if (c.command == "mixing") return cmd_mixing(c);
        if (c.command == "ftrace") return cmd_ftrace(c);
        if (c.command == "coupling") return cmd_coupling(c);
        if (c.command == "purify") return cmd_purify(c);
        return cmd_gallery_run(c, gallery_name);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
