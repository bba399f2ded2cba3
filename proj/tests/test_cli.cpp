// CLI surface: exit codes, file outputs, config precedence, reproducibility.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "checks.hpp"

namespace fs = std::filesystem;
using namespace testing;

static const std::string kBin = OSHAPE_BIN;

static int run(const std::string& args) {
    std::string cmd = kBin + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

static int run_capture(const std::string& args, const fs::path& log) {
    std::string cmd = kBin + " " + args + " > " + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

static fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "oshape_cli_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

static const std::string kTinyTrain =
    " --m 16 --n-data 16 --batch-symbols 64 --steps-phase1 6 --steps-phase2 6 --snr-db 10";

static void test_exit_codes() {
    check(run("train --m 16 --n-data 16 --seed 1") == 2, "missing --out exits 2");
    fs::path d = fresh_dir("noseed");
    check(run("train" + kTinyTrain + " --out " + d.string()) == 2, "missing --seed exits 2");
    check(run("baseline --kind nonsense --metric papr --seed 1 --out " + d.string()) == 2,
          "unknown baseline kind exits 2");
    check(run("baseline --kind clip --metric mi --seed 1 --out " + d.string()) == 2,
          "clip has no MI metric, exits 2");
    check(run("eval --metric mi --seed 1 --out " + d.string()) == 2,
          "eval without checkpoint exits 2");
    check(run("frobnicate") == 2, "unknown subcommand exits 2");
}

static void test_unknown_config_key() {
    fs::path d = fresh_dir("badkey");
    fs::path cfg = d / "exp.cfg";
    std::ofstream(cfg) << "m=16\nspectral_margin=3\n";
    fs::path log = d / "log.txt";
    int rc = run_capture("train --config " + cfg.string() + " --seed 1 --out " + d.string(),
                         log);
    check(rc == 2, "unknown config key exits 2");
    check(slurp(log).find("spectral_margin") != std::string::npos,
          "error names the offending key");
}

static void test_train_outputs_and_determinism() {
    fs::path d1 = fresh_dir("train1");
    std::string args = "train" + kTinyTrain + " --lambda 0.01 --seed 7 --out ";
    check(run(args + d1.string()) == 0, "tiny train run exits 0");

    for (const char* f : {"model.ckpt", "trace.csv", "resolved.cfg"})
        check(fs::exists(d1 / f), std::string("train writes ") + f);

    // identical resolved config (same out dir): rerun and compare bytes
    std::string ckpt1 = slurp(d1 / "model.ckpt");
    std::string trace1 = slurp(d1 / "trace.csv");
    check(run(args + d1.string()) == 0, "second identical train run exits 0");
    check(ckpt1 == slurp(d1 / "model.ckpt"),
          "identical configs give byte-identical checkpoints");
    check(trace1 == slurp(d1 / "trace.csv"),
          "identical configs give byte-identical traces");

    std::string trace = slurp(d1 / "trace.csv");
    check(trace.find("# config_hash=") == 0, "trace embeds the config hash");
    check(trace.find("step,phase,cross_entropy,entropy,papr_db,total") != std::string::npos,
          "trace header matches the schema");
}

static void test_config_precedence() {
    fs::path d = fresh_dir("prec");
    fs::path cfg = d / "exp.cfg";
    std::ofstream(cfg) << "m=16\nn_data=16\nbatch_symbols=64\nsteps_phase1=4\n"
                          "steps_phase2=0\nsnr_db=5\nseed=9\n";
    check(run("train --config " + cfg.string() + " --snr-db 7 --out " + d.string()) == 0,
          "train with config file exits 0");
    std::string resolved = slurp(d / "resolved.cfg");
    check(resolved.find("snr_db=7") != std::string::npos, "flag overrides the file value");
    check(resolved.find("seed=9") != std::string::npos, "file fills unset keys");
}

static void test_eval_and_baseline() {
    fs::path d = fresh_dir("eval");
    check(run("train" + kTinyTrain + " --seed 7 --out " + d.string()) == 0, "train for eval");

    fs::path e1 = fresh_dir("eval_mi");
    check(run("eval --ckpt " + (d / "model.ckpt").string() +
              " --metric mi --snr-grid 0:20:2 --n-symbols 2000 --seed 3 --out " +
              e1.string()) == 0,
          "eval mi over a grid exits 0");
    std::string mi = slurp(e1 / "mi.csv");
    check(mi.find("snr_db,mi_bits,n_symbols,seed") != std::string::npos, "mi csv schema");
    std::size_t rows = 0;
    for (char c : mi)
        if (c == '\n') ++rows;
    check(rows == 13, "grid 0:20:2 gives 11 data rows plus two header lines");

    fs::path e2 = fresh_dir("eval_papr");
    check(run("eval --ckpt " + (d / "model.ckpt").string() +
              " --metric papr --n-frames 200 --seed 3 --out " + e2.string()) == 0,
          "eval papr exits 0");
    check(slurp(e2 / "papr.csv").find("papr0_db,ccdf,n_frames,seed") != std::string::npos,
          "papr csv schema");

    fs::path e3 = fresh_dir("eval_const");
    check(run("eval --ckpt " + (d / "model.ckpt").string() +
              " --metric constellation --seed 3 --out " + e3.string()) == 0,
          "constellation export exits 0");
    check(slurp(e3 / "constellation.txt").find("entropy_bits=") != std::string::npos,
          "constellation header present");

    // corrupted checkpoint: flip a byte in the middle
    std::string blob = slurp(d / "model.ckpt");
    blob[blob.size() / 2] ^= 0x5a;
    blob.resize(blob.size() - 17);
    fs::path bad = d / "bad.ckpt";
    std::ofstream(bad, std::ios::binary) << blob;
    fs::path log = d / "err.txt";
    int rc = run_capture("eval --ckpt " + bad.string() + " --metric mi --seed 3 --out " +
                             e1.string(),
                         log);
    check(rc == 2, "corrupted checkpoint exits 2");
    check(slurp(log).find("offset") != std::string::npos, "load error reports the offset");

    fs::path b1 = fresh_dir("base_papr");
    check(run("baseline --kind slm --u 8 --metric papr --n-frames 200 --seed 3 --out " +
              b1.string()) == 0,
          "baseline slm papr exits 0");
    fs::path b2 = fresh_dir("base_ser");
    check(run("baseline --kind uniform --metric ser --m 16 --snr-grid 10:14:2 "
              "--n-symbols 4000 --seed 3 --out " +
              b2.string()) == 0,
          "baseline uniform ser exits 0");
    check(slurp(b2 / "ser.csv").find("snr_db,ser,n_symbols,seed") != std::string::npos,
          "ser csv schema");
}

static void test_selftest() {
    check(run("selftest") == 0, "selftest passes on a healthy build");
    fs::path d = fresh_dir("sabotage");
    fs::path log = d / "log.txt";
    int rc = run_capture("selftest --break-clip-adjoint", log);
    check(rc == 1, "sabotaged clip adjoint exits 1");
    check(slurp(log).find("clip-adjoint-chain") != std::string::npos,
          "failure names the broken gradient check");
}

int main() {
    test_exit_codes();
    test_unknown_config_key();
    test_train_outputs_and_determinism();
    test_config_precedence();
    test_eval_and_baseline();
    test_selftest();
    return summary("test_cli");
}
