#include "oshape/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "oshape/adam.hpp"

namespace oshape {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

void TrainConfig::validate() const {
    if (m < 2) throw std::invalid_argument("m: need at least 2 constellation points");
    if (n_data == 0 || (n_data & (n_data - 1)) != 0)
        throw std::invalid_argument("n_data: must be a power of two");
    if (lambda < 0.0) throw std::invalid_argument("lambda: must be >= 0");
    if (tau <= 0.0) throw std::invalid_argument("tau: must be > 0");
    if (lr <= 0.0) throw std::invalid_argument("lr: must be > 0");
    if (batch_symbols == 0 || batch_symbols % n_data != 0)
        throw std::invalid_argument("batch_symbols: must be a positive multiple of n_data");
}

BatchNoise draw_batch_noise(const TrainConfig& cfg, Rng& rng) {
    BatchNoise n;
    std::size_t frames = cfg.batch_symbols / cfg.n_data;
    n.gumbel = Tensor::matrix(cfg.batch_symbols, cfg.m);
    for (double& v : n.gumbel.data) v = rng.gumbel();
    n.awgn = Tensor::matrix(frames, 4 * cfg.n_data);
    double sd = std::sqrt(NoiseSpec::from_snr_db(cfg.snr_db).sigma2);
    for (double& v : n.awgn.data) v = sd * rng.gaussian();
    return n;
}

std::vector<Tensor> canonical_params(const ShapingModel& model) {
    std::vector<Tensor> out;
    for (const auto& [name, t] : model.named_tensors()) out.push_back(*t);
    return out;
}

void assign_canonical_params(ShapingModel& model, const std::vector<Tensor>& params) {
    auto named = model.named_tensors();
    if (named.size() != params.size())
        throw std::invalid_argument("assign_canonical_params: count mismatch");
    for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = params[i];
}

namespace {

struct ParamSplit {
    MlpVars nn1, nn2, nn3;
};

// params holds w0,b0,...,w3,b3 for nn1, nn2, nn3 in order.
ParamSplit split_params(const std::vector<Var>& params) {
    if (params.size() != 24)
        throw std::invalid_argument("build_loss_graph: expected 24 parameter tensors");
    ParamSplit s;
    MlpVars* nets[3] = {&s.nn1, &s.nn2, &s.nn3};
    std::size_t at = 0;
    for (auto* net : nets) {
        for (int l = 0; l < 4; ++l) {
            net->w.push_back(params[at++]);
            net->b.push_back(params[at++]);
        }
    }
    return s;
}

Var apply_mlp(Tape& tape, const MlpVars& vars, Var x) {
    Var h = x;
    for (std::size_t l = 0; l < vars.w.size(); ++l) {
        h = tape.affine(h, vars.w[l], vars.b[l]);
        if (l + 1 < vars.w.size()) h = tape.relu(h);
    }
    return h;
}

} // namespace

LossGraph build_loss_graph(Tape& tape, const std::vector<Var>& params, const TrainConfig& cfg,
                           const BatchNoise& noise, bool include_papr, bool relaxed) {
    cfg.validate();
    ParamSplit nets = split_params(params);
    std::size_t B = cfg.batch_symbols;
    std::size_t N = cfg.n_data;
    std::size_t F = B / N;
    std::size_t M = cfg.m;

    // NN1: SNR (dB) -> distribution logits.
    Tensor snr_in = Tensor::matrix(1, 1);
    snr_in(0, 0) = cfg.snr_db;
    Var logits = apply_mlp(tape, nets.nn1, tape.constant(snr_in)); // [1,M]
    Var logp_row = tape.log_softmax_rows(logits);
    Var p_row = tape.softmax_rows(logits);
    Var logp = tape.reshape(logp_row, {M});
    Var p = tape.reshape(p_row, {M});
    Var entropy = tape.neg(tape.dot(p, logp));

    // Gumbel-Softmax draws; the hard index is argmax(g + log p).
    Var z = tape.add_rowvec(tape.constant(noise.gumbel), logp); // [B,M]
    Var soft = tape.softmax_rows(tape.scale(z, 1.0 / cfg.tau));
    const Tensor& zv = tape.value(z);
    std::vector<std::size_t> labels(B);
    Tensor hard = Tensor::matrix(B, M);
    for (std::size_t r = 0; r < B; ++r) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < M; ++c)
            if (zv(r, c) > zv(r, arg)) arg = c;
        labels[r] = arg;
        hard(r, arg) = 1.0;
    }
    Var sym = relaxed ? soft : ste_combine_node(tape, soft, hard);

    // NN2 over all one-hot vectors gives the constellation used for the
    // power normalization; the same network maps the drawn symbols.
    Tensor eye = Tensor::matrix(M, M);
    for (std::size_t i = 0; i < M; ++i) eye(i, i) = 1.0;
    Var points = apply_mlp(tape, nets.nn2, tape.constant(eye)); // [M,2]
    Var energies = tape.sum_rows(tape.mul(points, points));     // [M]
    Var avg_energy = tape.dot(p, energies);
    Var gamma = tape.pow_scalar(avg_energy, -0.5);
    Var tx = tape.mul_scalar(apply_mlp(tape, nets.nn2, sym), gamma); // [B,2]

    // Physical chain per frame.
    std::vector<Var> received;
    std::vector<Var> frame_paprs;
    std::vector<Var> frame_time;
    received.reserve(F);
    frame_paprs.reserve(F);
    frame_time.reserve(F);
    for (std::size_t f = 0; f < F; ++f) {
        Var sym_ri = tape.slice_rows(tx, f * N, (f + 1) * N); // [N,2]
        Var freq = hermitian_map_node(tape, sym_ri);
        Var xt = modulate_real_node(tape, freq);
        frame_time.push_back(xt);
        Var xc = clip_nonneg_node(tape, xt);
        frame_paprs.push_back(papr_linear_node(tape, xc));
        Tensor zrow({4 * N});
        std::copy(noise.awgn.data.begin() + f * 4 * N,
                  noise.awgn.data.begin() + (f + 1) * 4 * N, zrow.data.begin());
        Var y = tape.add_const(xc, zrow);
        Var yc = unitary_dft_node(tape, real_to_complex_node(tape, y), false);
        received.push_back(extract_data_node(tape, yc)); // [N,2]
    }
    Var rx = tape.concat_rows(received); // [B,2]
    Var papr_mean = tape.mean_of(frame_paprs);

    // NN3 demapper and the categorical cross entropy against drawn labels.
    Var post_logits = apply_mlp(tape, nets.nn3, rx);
    Var logpost = tape.log_softmax_rows(post_logits);
    Var ce = tape.neg(tape.mean(tape.pick(logpost, labels)));

    Var total = tape.sub(ce, entropy);
    if (include_papr && cfg.lambda > 0.0)
        total = tape.add(total, tape.scale(papr_mean, cfg.lambda));

    LossGraph g;
    g.total = total;
    g.cross_entropy = ce;
    g.entropy = entropy;
    g.papr_mean = papr_mean;
    g.labels = std::move(labels);
    g.frame_time = std::move(frame_time);
    return g;
}

namespace {

LossBreakdown read_breakdown(const Tape& tape, const LossGraph& g) {
    LossBreakdown b;
    b.cross_entropy = tape.value(g.cross_entropy).data[0];
    b.entropy = tape.value(g.entropy).data[0];
    b.papr_term = tape.value(g.papr_mean).data[0];
    b.total = tape.value(g.total).data[0];
    return b;
}

} // namespace

LossBreakdown forward_batch(const ShapingModel& model, const TrainConfig& cfg, Rng& rng,
                            int phase) {
    BatchNoise noise = draw_batch_noise(cfg, rng);
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : canonical_params(model)) vars.push_back(tape.constant(t));
    LossGraph g = build_loss_graph(tape, vars, cfg, noise, phase == 2, false);
    return read_breakdown(tape, g);
}

TrainRun train_two_phase(const TrainConfig& cfg, const StepCallback& on_step) {
    cfg.validate();
    TrainRun run;
    run.cfg = cfg;
    Rng rng(cfg.seed);
    run.model.init(cfg.m, rng);

    auto named = run.model.named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> reg;
    for (auto& [name, t] : named) reg.emplace_back(name, t);
    Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}, reg);

    std::size_t total_steps = cfg.steps_phase1 + cfg.steps_phase2;
    double initial_mag = 0.0;
    std::size_t bad_streak = 0;
    for (std::size_t step = 1; step <= total_steps; ++step) {
        int phase = step <= cfg.steps_phase1 ? 1 : 2;
        BatchNoise noise = draw_batch_noise(cfg, rng);
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(named.size());
        for (auto& [name, t] : named) vars.push_back(tape.param(*t));
        LossGraph g = build_loss_graph(tape, vars, cfg, noise, phase == 2, false);
        LossBreakdown loss = read_breakdown(tape, g);
        if (!std::isfinite(loss.total))
            throw TrainError("train: non-finite loss at step " + std::to_string(step) +
                                 " (ce=" + std::to_string(loss.cross_entropy) +
                                 ", H=" + std::to_string(loss.entropy) +
                                 ", papr=" + std::to_string(loss.papr_term) + ")",
                             run.trace);

        tape.backward(g.total);
        std::vector<Tensor*> params;
        std::vector<const Tensor*> grads;
        params.reserve(named.size());
        grads.reserve(named.size());
        for (std::size_t i = 0; i < named.size(); ++i) {
            params.push_back(named[i].second);
            grads.push_back(&tape.grad(vars[i]));
        }
        opt.step(params, grads);

        TraceRow row{step, phase, loss};
        run.trace.push_back(row);
        if (on_step) on_step(row);

        // +1 floors the scale so a near-zero initial loss does not make the
        // guard hair-triggered
        if (step == 1) initial_mag = std::abs(loss.total) + 1.0;
        if (loss.total > 10.0 * initial_mag) {
            if (++bad_streak >= 100)
                throw TrainError("train: loss diverged (above 10x initial for 100 steps, "
                                 "step " + std::to_string(step) + ")",
                                 run.trace);
        } else {
            bad_streak = 0;
        }
    }
    run.final_phase = (cfg.steps_phase2 > 0 || cfg.steps_phase1 == 0) ? 2 : 1;

    // Held-out deterministic batch for replay verification.
    Rng eval_rng = Rng::substream(cfg.seed, 0x7265706c6179ULL);
    run.final_eval_loss =
        forward_batch(run.model, cfg, eval_rng, run.final_phase).total;
    return run;
}

// --- persistence ---

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void put_u32(std::string& buf, std::uint32_t v) {
    buf.append(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::string& buf, std::uint64_t v) {
    buf.append(reinterpret_cast<const char*>(&v), 8);
}

struct Reader {
    const std::string& buf;
    std::size_t at = 0;

    void need(std::size_t n, const char* what) const {
        if (at + n > buf.size())
            throw CheckpointError(std::string("truncated checkpoint: ") + what, at);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + at, 4);
        at += 4;
        return v;
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v;
        std::memcpy(&v, buf.data() + at, 2);
        at += 2;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + at, 8);
        at += 8;
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(at, n);
        at += n;
        return s;
    }
};

constexpr std::uint16_t kCheckpointVersion = 1;

} // namespace

void checkpoint_save(const TrainRun& run, const std::string& path) {
    std::string buf;
    buf += "OSHP";
    std::uint16_t ver = kCheckpointVersion;
    buf.append(reinterpret_cast<const char*>(&ver), 2);

    const TrainConfig& c = run.cfg;
    std::ostringstream meta;
    meta << "m=" << c.m << "\n";
    meta << "n_data=" << c.n_data << "\n";
    meta << "snr_db=" << fmt_double(c.snr_db) << "\n";
    meta << "lambda=" << fmt_double(c.lambda) << "\n";
    meta << "tau=" << fmt_double(c.tau) << "\n";
    meta << "lr=" << fmt_double(c.lr) << "\n";
    meta << "batch_symbols=" << c.batch_symbols << "\n";
    meta << "steps_phase1=" << c.steps_phase1 << "\n";
    meta << "steps_phase2=" << c.steps_phase2 << "\n";
    meta << "seed=" << c.seed << "\n";
    meta << "phase=" << run.final_phase << "\n";
    meta << "\n";
    buf += meta.str();

    for (const auto& [name, t] : run.model.named_tensors()) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        put_u32(buf, static_cast<std::uint32_t>(t->shape.size()));
        for (std::size_t d : t->shape) put_u64(buf, d);
        buf.append(reinterpret_cast<const char*>(t->data.data()), t->data.size() * 8);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint_save: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("checkpoint_save: write failed for " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint_load: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf};

    if (r.bytes(4, "magic") != "OSHP") throw CheckpointError("bad magic", 0);
    std::uint16_t ver = r.u16("version");
    if (ver != kCheckpointVersion)
        throw CheckpointError("unsupported version " + std::to_string(ver), 4);

    // metadata block: key=value lines up to a blank line
    Checkpoint ck;
    std::map<std::string, std::string> meta;
    for (;;) {
        std::size_t eol = buf.find('\n', r.at);
        if (eol == std::string::npos)
            throw CheckpointError("unterminated metadata block", r.at);
        std::string line = buf.substr(r.at, eol - r.at);
        r.at = eol + 1;
        if (line.empty()) break;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CheckpointError("malformed metadata line '" + line + "'", r.at);
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end())
            throw CheckpointError(std::string("missing metadata key ") + key, r.at);
        return it->second;
    };
    try {
        ck.cfg.m = std::stoull(get("m"));
        ck.cfg.n_data = std::stoull(get("n_data"));
        ck.cfg.snr_db = std::stod(get("snr_db"));
        ck.cfg.lambda = std::stod(get("lambda"));
        ck.cfg.tau = std::stod(get("tau"));
        ck.cfg.lr = std::stod(get("lr"));
        ck.cfg.batch_symbols = std::stoull(get("batch_symbols"));
        ck.cfg.steps_phase1 = std::stoull(get("steps_phase1"));
        ck.cfg.steps_phase2 = std::stoull(get("steps_phase2"));
        ck.cfg.seed = std::stoull(get("seed"));
        ck.phase = std::stoi(get("phase"));
    } catch (const std::logic_error&) {
        throw CheckpointError("unparsable metadata value", r.at);
    }

    Rng dummy(0);
    ck.model.init(ck.cfg.m, dummy);
    auto named = ck.model.named_tensors();
    std::size_t loaded = 0;
    while (r.at < buf.size()) {
        std::uint32_t name_len = r.u32("tensor name length");
        std::string name = r.bytes(name_len, "tensor name");
        std::uint32_t rank = r.u32("tensor rank");
        std::vector<std::size_t> dims;
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            dims.push_back(r.u64("tensor dims"));
            numel *= dims.back();
        }
        Tensor* target = nullptr;
        for (auto& [n, t] : named)
            if (n == name) target = t;
        if (!target) throw CheckpointError("unknown tensor '" + name + "'", r.at);
        if (target->shape != dims)
            throw CheckpointError("shape mismatch for tensor '" + name + "'", r.at);
        std::string raw = r.bytes(numel * 8, "tensor data");
        std::memcpy(target->data.data(), raw.data(), raw.size());
        ++loaded;
    }
    if (loaded != named.size())
        throw CheckpointError("checkpoint holds " + std::to_string(loaded) + " tensors, expected " +
                                  std::to_string(named.size()),
                              r.at);
    return ck;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows,
                     const std::string& header_comment) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "step,phase,cross_entropy,entropy,papr_db,total\n";
    out.precision(17);
    for (const TraceRow& r : rows) {
        out << r.step << "," << r.phase << "," << r.loss.cross_entropy << ","
            << r.loss.entropy << "," << r.loss.papr_db() << "," << r.loss.total << "\n";
    }
}

} // namespace oshape
