// Command-line driver: training, evaluation, baselines and the fast
// self-test suite, wired for reproducible experiment runs.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "oshape/gradcheck.hpp"
#include "oshape/metrics.hpp"

namespace fs = std::filesystem;
using namespace oshape;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value option store; flags override file entries.
struct Options {
    std::map<std::string, std::string> kv;

    static const std::vector<std::string>& known_keys() {
        static const std::vector<std::string> keys = {
            "m",          "n_data",       "snr_db",     "lambda",     "tau",
            "lr",         "batch_symbols", "steps_phase1", "steps_phase2", "seed",
            "out",        "metric",       "kind",       "ckpt",       "snr_grid",
            "n_frames",   "n_symbols",    "thresholds_db", "u",       "cr_db",
            "threads",    "aux_steps",    "aux_batch"};
        return keys;
    }

    static bool is_known(const std::string& k) {
        for (const auto& key : known_keys())
            if (key == k) return true;
        return false;
    }

    void set(const std::string& k, const std::string& v) {
        if (!is_known(k)) throw ConfigError("unknown config key '" + k + "'");
        kv[k] = v;
    }

    bool has(const std::string& k) const { return kv.count(k) > 0; }

    std::string get_str(const std::string& k, const std::string& dflt = "") const {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : it->second;
    }

    double get_double(const std::string& k, double dflt) const {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::logic_error&) {
            throw ConfigError("config key '" + k + "': bad number '" + it->second + "'");
        }
    }

    std::uint64_t get_u64(const std::string& k, std::uint64_t dflt) const {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        try {
            std::size_t pos = 0;
            std::uint64_t v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::logic_error&) {
            throw ConfigError("config key '" + k + "': bad integer '" + it->second + "'");
        }
    }
};

void load_config_file(Options& opts, const std::string& path,
                      const std::map<std::string, std::string>& flag_overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = line;
        s.erase(0, s.find_first_not_of(" \t"));
        if (s.empty() || s[0] == '#') continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string k = s.substr(0, eq);
        std::string v = s.substr(eq + 1);
        k.erase(k.find_last_not_of(" \t") + 1);
        v.erase(0, v.find_first_not_of(" \t"));
        v.erase(v.find_last_not_of(" \t\r") + 1);
        if (!Options::is_known(k)) throw ConfigError("unknown config key '" + k + "'");
        if (flag_overrides.count(k)) continue; // flags take precedence
        opts.kv[k] = v;
    }
}

std::vector<double> parse_grid(const std::string& spec) {
    // "a:b:s" inclusive, or a single value
    std::vector<double> out;
    std::size_t c1 = spec.find(':');
    try {
        if (c1 == std::string::npos) {
            out.push_back(std::stod(spec));
            return out;
        }
        std::size_t c2 = spec.find(':', c1 + 1);
        if (c2 == std::string::npos) throw std::invalid_argument("");
        double a = std::stod(spec.substr(0, c1));
        double b = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
        double s = std::stod(spec.substr(c2 + 1));
        if (s <= 0.0) throw std::invalid_argument("");
        for (double x = a; x <= b + 1e-9; x += s) out.push_back(x);
        return out;
    } catch (const std::logic_error&) {
        throw ConfigError("bad grid spec '" + spec + "' (want a:b:step or a single value)");
    }
}

std::string resolved_text(const std::string& command, const Options& opts) {
    std::ostringstream os;
    os << "command=" << command << "\n";
    for (const auto& [k, v] : opts.kv) os << k << "=" << v << "\n";
    return os.str();
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_comment(const std::string& resolved) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "config_hash=%016llx",
                  static_cast<unsigned long long>(fnv1a64(resolved)));
    return buf;
}

void write_resolved(const fs::path& dir, const std::string& resolved) {
    std::ofstream out(dir / "resolved.cfg", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "resolved.cfg").string());
    out << resolved;
}

fs::path require_out_dir(const Options& opts) {
    if (!opts.has("out")) throw ConfigError("missing required option: out");
    fs::path dir(opts.get_str("out"));
    fs::create_directories(dir);
    return dir;
}

std::uint64_t require_seed(const Options& opts) {
    if (!opts.has("seed")) throw ConfigError("missing required option: seed");
    return opts.get_u64("seed", 0);
}

TrainConfig train_config_from(const Options& opts) {
    TrainConfig cfg;
    cfg.m = static_cast<std::size_t>(opts.get_u64("m", 16));
    cfg.n_data = static_cast<std::size_t>(opts.get_u64("n_data", 16));
    cfg.snr_db = opts.get_double("snr_db", 10.0);
    cfg.lambda = opts.get_double("lambda", 0.01);
    cfg.tau = opts.get_double("tau", 1.0);
    cfg.lr = opts.get_double("lr", 0.01);
    cfg.batch_symbols = static_cast<std::size_t>(opts.get_u64("batch_symbols", 3008));
    cfg.steps_phase1 = static_cast<std::size_t>(opts.get_u64("steps_phase1", 4500));
    cfg.steps_phase2 = static_cast<std::size_t>(opts.get_u64("steps_phase2", 4500));
    cfg.seed = require_seed(opts);
    return cfg;
}

int cmd_train(const Options& opts) {
    fs::path dir = require_out_dir(opts);
    TrainConfig cfg = train_config_from(opts);
    cfg.validate();
    std::string resolved = resolved_text("train", opts);
    write_resolved(dir, resolved);

    TrainRun run;
    try {
        run = train_two_phase(cfg, [](const TraceRow& r) {
            if (r.step % 100 == 0)
                std::printf("step %zu phase %d: ce=%.4f H=%.4f papr=%.2fdB total=%.4f\n",
                            r.step, r.phase, r.loss.cross_entropy, r.loss.entropy,
                            r.loss.papr_db(), r.loss.total);
        });
    } catch (const TrainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (!e.trace.empty())
            write_trace_csv((dir / "trace.csv").string(), e.trace, hash_comment(resolved));
        return 3;
    }

    checkpoint_save(run, (dir / "model.ckpt").string());
    write_trace_csv((dir / "trace.csv").string(), run.trace, hash_comment(resolved));
    std::printf("wrote %s and %s (final loss %.6f)\n", (dir / "model.ckpt").c_str(),
                (dir / "trace.csv").c_str(), run.final_eval_loss);
    return 0;
}

int cmd_eval(const Options& opts) {
    if (!opts.has("ckpt")) throw ConfigError("missing required option: ckpt");
    std::string metric = opts.get_str("metric");
    if (metric != "mi" && metric != "ser" && metric != "papr" && metric != "constellation")
        throw ConfigError("metric must be one of mi, ser, papr, constellation");
    fs::path dir = require_out_dir(opts);
    std::uint64_t seed = require_seed(opts);
    int threads = static_cast<int>(opts.get_u64("threads", 1));
    Checkpoint ck = checkpoint_load(opts.get_str("ckpt"));
    std::string resolved = resolved_text("eval", opts);
    write_resolved(dir, resolved);
    std::string hash = hash_comment(resolved);
    std::size_t n_data = ck.cfg.n_data;

    if (metric == "mi" || metric == "ser") {
        std::vector<double> grid =
            opts.has("snr_grid") ? parse_grid(opts.get_str("snr_grid"))
                                 : std::vector<double>{opts.get_double("snr_db", ck.cfg.snr_db)};
        std::size_t n_symbols = static_cast<std::size_t>(opts.get_u64("n_symbols", 100000));
        MetricCurve curve;
        curve.label = metric;
        curve.seed = seed;
        for (double snr : grid) {
            curve.x.push_back(snr);
            if (metric == "mi") {
                MiEstimate e = eval_mi(ck.model, snr, n_symbols, n_data, seed, threads);
                curve.y.push_back(e.mi_bits);
                curve.n_samples.push_back(e.n_symbols);
            } else {
                SerEstimate e = eval_ser_shaped(ck.model, snr, n_symbols, n_data, seed, threads);
                curve.y.push_back(e.value());
                curve.n_samples.push_back(e.n_symbols);
            }
        }
        fs::path file = dir / (metric + ".csv");
        std::ofstream out(file, std::ios::trunc);
        if (metric == "mi")
            write_mi_csv(out, curve, hash);
        else
            write_ser_csv(out, curve, hash);
        std::printf("wrote %s\n", file.c_str());
        return 0;
    }

    if (metric == "papr") {
        std::size_t n_frames = static_cast<std::size_t>(opts.get_u64("n_frames", 2000));
        std::vector<double> thresholds =
            parse_grid(opts.get_str("thresholds_db", "0:16:0.1"));
        double snr = opts.get_double("snr_db", ck.cfg.snr_db);
        MetricCurve curve = eval_papr_ccdf(shaped_frame_tx(ck.model, snr, n_data), n_frames,
                                           thresholds, seed, threads);
        fs::path file = dir / "papr.csv";
        std::ofstream out(file, std::ios::trunc);
        write_ccdf_csv(out, curve, hash);
        std::printf("wrote %s\n", file.c_str());
        return 0;
    }

    // constellation export
    double snr = opts.get_double("snr_db", ck.cfg.snr_db);
    ShapedConstellation c = ck.model.constellation(snr);
    fs::path file = dir / "constellation.txt";
    std::ofstream out(file, std::ios::trunc);
    write_constellation(out, c, hash);
    std::printf("wrote %s\n", file.c_str());
    return 0;
}

int cmd_baseline(const Options& opts) {
    std::string kind = opts.get_str("kind");
    if (kind != "uniform" && kind != "clip" && kind != "slm")
        throw ConfigError("kind must be one of uniform, clip, slm");
    std::string metric = opts.get_str("metric");
    if (metric != "mi" && metric != "ser" && metric != "papr")
        throw ConfigError("metric must be one of mi, ser, papr");
    if (metric == "mi" && kind != "uniform")
        throw ConfigError("metric mi is only defined for kind=uniform");

    fs::path dir = require_out_dir(opts);
    std::uint64_t seed = require_seed(opts);
    int threads = static_cast<int>(opts.get_u64("threads", 1));
    std::size_t m = static_cast<std::size_t>(opts.get_u64("m", 16));
    std::size_t n_data = static_cast<std::size_t>(opts.get_u64("n_data", 16));
    std::size_t u = static_cast<std::size_t>(opts.get_u64("u", 128));
    double cr_db = opts.get_double("cr_db", 3.0);
    UniformQam qam = qam_constellation(m);
    std::string resolved = resolved_text("baseline", opts);
    write_resolved(dir, resolved);
    std::string hash = hash_comment(resolved);

    if (metric == "papr") {
        std::size_t n_frames = static_cast<std::size_t>(opts.get_u64("n_frames", 2000));
        std::vector<double> thresholds =
            parse_grid(opts.get_str("thresholds_db", "0:16:0.1"));
        FrameTx tx = kind == "uniform" ? uniform_frame_tx(qam, n_data)
                     : kind == "slm"   ? slm_frame_tx(qam, n_data, SlmConfig{u, seed})
                                       : clip_frame_tx(qam, n_data, cr_db);
        MetricCurve curve = eval_papr_ccdf(tx, n_frames, thresholds, seed, threads);
        curve.label = kind;
        fs::path file = dir / "papr.csv";
        std::ofstream out(file, std::ios::trunc);
        write_ccdf_csv(out, curve, hash);
        std::printf("wrote %s\n", file.c_str());
        return 0;
    }

    std::vector<double> grid = opts.has("snr_grid")
                                   ? parse_grid(opts.get_str("snr_grid"))
                                   : std::vector<double>{opts.get_double("snr_db", 10.0)};
    std::size_t n_symbols = static_cast<std::size_t>(opts.get_u64("n_symbols", 100000));
    MetricCurve curve;
    curve.label = kind;
    curve.seed = seed;
    for (double snr : grid) {
        curve.x.push_back(snr);
        if (metric == "mi") {
            std::size_t aux_steps = static_cast<std::size_t>(opts.get_u64("aux_steps", 400));
            std::size_t aux_batch = static_cast<std::size_t>(opts.get_u64("aux_batch", 1024));
            Mlp dem = train_uniform_demapper(qam, snr, n_data, aux_steps, aux_batch,
                                             seed ^ 0x617578ULL);
            MiEstimate e = eval_mi_uniform(qam, dem, snr, n_symbols, n_data, seed, threads);
            curve.y.push_back(e.mi_bits);
            curve.n_samples.push_back(e.n_symbols);
        } else {
            SerEstimate e = kind == "uniform"
                                ? eval_ser_uniform(qam, snr, n_symbols, n_data, seed, threads)
                            : kind == "slm"
                                ? eval_ser_slm(qam, SlmConfig{u, seed}, snr, n_symbols, n_data,
                                               seed, threads)
                                : eval_ser_clip(qam, cr_db, snr, n_symbols, n_data, seed,
                                                threads);
            curve.y.push_back(e.value());
            curve.n_samples.push_back(e.n_symbols);
        }
    }
    fs::path file = dir / (metric + ".csv");
    std::ofstream out(file, std::ios::trunc);
    if (metric == "mi")
        write_mi_csv(out, curve, hash);
    else
        write_ser_csv(out, curve, hash);
    std::printf("wrote %s\n", file.c_str());
    return 0;
}

// --- selftest ---

struct CheckResult {
    std::string name;
    double tolerance;
    double observed;
    bool pass;
};

void report(std::vector<CheckResult>& all, const std::string& name, double tol, double obs,
            bool less_is_pass = true) {
    bool pass = less_is_pass ? obs < tol : obs >= tol;
    all.push_back({name, tol, obs, pass});
    std::printf("%-28s tol=%-12.3g observed=%-12.6g %s\n", name.c_str(), tol, obs,
                pass ? "PASS" : "FAIL");
}

int cmd_selftest(bool break_clip_adjoint) {
    std::vector<CheckResult> checks;
    Rng rng(20240901);

    // gradient check: 3-layer ReLU MLP, pre-activations kept off the kink
    {
        Mlp mlp;
        NetConfig cfg{3, 2, {8, 8, 8}};
        mlp.init(cfg, rng);
        Tensor x = Tensor::matrix(4, 3);
        for (double& v : x.data) v = rng.gaussian();
        std::vector<Tensor> params;
        for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
            params.push_back(mlp.weights[l]);
            params.push_back(mlp.biases[l]);
        }
        auto build = [&](Tape& t, const std::vector<Var>& vs) {
            Var h = t.constant(x);
            for (std::size_t l = 0; l < 4; ++l) {
                h = t.affine(h, vs[2 * l], vs[2 * l + 1]);
                if (l < 3) h = t.relu(h);
            }
            return t.mean(t.mul(h, h));
        };
        GradCheckReport rep = grad_check(build, params, 1e-6);
        report(checks, "mlp-gradient", 1e-5, rep.max_rel_err);
    }

    // gradient check through the unitary transform
    {
        Tensor x = Tensor::matrix(2, 16);
        for (double& v : x.data) v = rng.gaussian();
        std::vector<Tensor> params{x};
        auto build = [](Tape& t, const std::vector<Var>& vs) {
            Var y = unitary_dft_node(t, vs[0], true);
            Var z = unitary_dft_node(t, y, false);
            return t.sum(t.mul(y, t.add(y, z)));
        };
        GradCheckReport rep = grad_check(build, params, 1e-5);
        report(checks, "dft-adjoint", 1e-6, rep.max_rel_err);
    }

    // gradient check of the physical chain including the clip adjoint
    {
        std::size_t n = 4;
        Tensor sym = Tensor::matrix(n, 2);
        for (double& v : sym.data) v = rng.gaussian();
        Tensor zt({4 * n});
        for (double& v : zt.data) v = 0.05 * rng.gaussian();
        std::vector<Tensor> params{sym};
        auto build = [&](Tape& t, const std::vector<Var>& vs) {
            Var freq = hermitian_map_node(t, vs[0]);
            Var xt = modulate_real_node(t, freq);
            Var xc;
            if (break_clip_adjoint) {
                // test fixture: clip with a deliberately wrong adjoint mask
                Tensor out = t.value(xt);
                for (double& v : out.data) v = v > 0.0 ? v : 0.0;
                xc = t.custom({xt}, std::move(out), [](Tape& tt, int self) {
                    int p = tt.parents_of(self)[0];
                    const Tensor& g = tt.out_grad(self);
                    const Tensor& xv = tt.value_of(p);
                    Tensor gx(xv.shape);
                    for (std::size_t i = 0; i < gx.data.size(); ++i)
                        gx.data[i] = xv.data[i] > 0.5 ? g.data[i] : 0.0;
                    tt.accumulate(p, gx);
                });
            } else {
                xc = clip_nonneg_node(t, xt);
            }
            Var papr_term = papr_linear_node(t, xc);
            Var y = t.add_const(xc, zt);
            Var yc = unitary_dft_node(t, real_to_complex_node(t, y), false);
            Var rx = extract_data_node(t, yc);
            return t.add(t.mean(t.mul(rx, rx)), t.scale(papr_term, 0.01));
        };
        GradCheckReport rep = grad_check(build, params, 1e-6);
        report(checks, "clip-adjoint-chain", 1e-4, rep.max_rel_err);
    }

    // clipping halves the data subcarriers exactly
    {
        double worst = 0.0;
        double worst_anti = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            std::size_t n = 16;
            ComplexVector data(n);
            for (std::size_t k = 0; k < n; ++k)
                data.set(k, {rng.gaussian(), rng.gaussian()});
            OfdmFrame f = modulate(data);
            for (std::size_t i = 0; i < 2 * n; ++i)
                worst_anti = std::max(worst_anti,
                                      std::abs(f.time_unclipped[i] + f.time_unclipped[i + 2 * n]));
            ComplexVector rx = demodulate(f.time_clipped);
            for (std::size_t k = 0; k < n; ++k)
                worst = std::max(worst, std::abs(rx.at(k) - 0.5 * data.at(k)));
        }
        report(checks, "clipping-halving", 1e-9, worst);
        report(checks, "antisymmetry", 1e-10, worst_anti);
    }

    // Gumbel-max samples follow the target distribution (chi-square, 99%)
    {
        std::size_t m = 16;
        std::vector<double> probs(m);
        double sum = 0.0;
        for (double& p : probs) {
            p = rng.uniform01() + 0.05;
            sum += p;
        }
        for (double& p : probs) p /= sum;
        std::vector<std::size_t> counts(m, 0);
        std::size_t draws = 100000;
        for (std::size_t i = 0; i < draws; ++i)
            counts[gumbel_draw(probs, 1.0, rng).index]++;
        double stat = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double expected = probs[i] * static_cast<double>(draws);
            double d = static_cast<double>(counts[i]) - expected;
            stat += d * d / expected;
        }
        // chi-square 99th percentile, 15 degrees of freedom
        report(checks, "gumbel-chi-square", 30.5779, stat);
    }

    // CCDF is monotone nonincreasing and within [0,1]
    {
        std::vector<double> samples(500);
        for (double& s : samples) s = 6.0 + 4.0 * rng.uniform01();
        std::vector<double> thresholds;
        for (double t = 0.0; t <= 14.0; t += 0.25) thresholds.push_back(t);
        MetricCurve c = ccdf(samples, thresholds);
        double worst = 0.0;
        for (std::size_t i = 0; i < c.y.size(); ++i) {
            if (c.y[i] < 0.0 || c.y[i] > 1.0) worst = 1.0;
            if (i > 0 && c.y[i] > c.y[i - 1] + 1e-15) worst = 1.0;
        }
        report(checks, "ccdf-monotone", 0.5, worst);
    }

    int failures = 0;
    for (const CheckResult& c : checks)
        if (!c.pass) ++failures;
    if (failures) {
        std::printf("selftest: %d check(s) failed:", failures);
        for (const CheckResult& c : checks)
            if (!c.pass) std::printf(" %s", c.name.c_str());
        std::printf("\n");
        return 1;
    }
    std::printf("selftest: all %zu checks passed\n", checks.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ACO-OFDM constellation-shaping experiments"};
    app.require_subcommand(1);

    std::map<std::string, std::string> flag_values;
    std::string config_path;
    bool break_clip = false;

    auto add_common = [&](CLI::App* sub, std::initializer_list<const char*> keys) {
        sub->add_option("--config", config_path, "flat key=value config file");
        for (const char* k : keys) {
            std::string key = k;
            std::string flag = "--" + key;
            for (auto& ch : flag)
                if (ch == '_') ch = '-';
            sub->add_option_function<std::string>(
                flag, [&flag_values, key](const std::string& v) { flag_values[key] = v; });
        }
    };

    CLI::App* train = app.add_subcommand("train", "two-phase training run");
    add_common(train, {"m", "n_data", "snr_db", "lambda", "tau", "lr", "batch_symbols",
                       "steps_phase1", "steps_phase2", "seed", "out", "threads"});

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, {"ckpt", "metric", "snr_db", "snr_grid", "n_frames", "n_symbols",
                      "thresholds_db", "seed", "out", "threads"});

    CLI::App* baseline = app.add_subcommand("baseline", "non-learning reference systems");
    add_common(baseline, {"kind", "metric", "m", "n_data", "snr_db", "snr_grid", "n_frames",
                          "n_symbols", "thresholds_db", "u", "cr_db", "aux_steps", "aux_batch",
                          "seed", "out", "threads"});

    CLI::App* selftest = app.add_subcommand("selftest", "fast invariant suite");
    selftest->add_flag("--break-clip-adjoint", break_clip,
                       "test fixture: sabotage the clip adjoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        Options opts;
        if (!config_path.empty()) load_config_file(opts, config_path, flag_values);
        for (const auto& [k, v] : flag_values) opts.set(k, v);

        if (train->parsed()) return cmd_train(opts);
        if (eval->parsed()) return cmd_eval(opts);
        if (baseline->parsed()) return cmd_baseline(opts);
        if (selftest->parsed()) return cmd_selftest(break_clip);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
