#include "dcls/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dcls/common.hpp"

namespace dcls {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

std::string layer_prefix(int l) { return "layer" + std::to_string(l) + "."; }

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2)); }

double gelu_grad(double z) {
    return 0.5 * (1.0 + std::erf(z * M_SQRT1_2)) + z * kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

// softmax over a row in place; returns nothing, numerically stabilized
void softmax_inplace(double* x, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) x[i] *= inv;
}

} // namespace

void EncoderConfig::validate() const {
    if (vocab_size < 6) throw ConfigError("vocab_size must cover the special tokens");
    if (dim < 1 || heads < 1 || layers < 1 || ffn < 1 || max_len < 1 || num_classes < 1)
        throw ConfigError("model dimensions must be >= 1");
    if (dim % heads != 0) throw ConfigError("dim must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

ParamLayout::ParamLayout(const EncoderConfig& cfg) {
    auto add = [&](std::string name, int rows, int cols) {
        ParamInfo info{std::move(name), total_, rows, cols};
        total_ += info.count();
        entries_.push_back(std::move(info));
    };
    add("embed.tok", cfg.vocab_size, cfg.dim);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = layer_prefix(l);
        add(p + "ln1.g", cfg.dim, 1);
        add(p + "ln1.b", cfg.dim, 1);
        add(p + "attn.q.w", cfg.dim, cfg.dim);
        add(p + "attn.q.b", cfg.dim, 1);
        add(p + "attn.k.w", cfg.dim, cfg.dim);
        add(p + "attn.k.b", cfg.dim, 1);
        add(p + "attn.v.w", cfg.dim, cfg.dim);
        add(p + "attn.v.b", cfg.dim, 1);
        add(p + "attn.out.w", cfg.dim, cfg.dim);
        add(p + "attn.out.b", cfg.dim, 1);
        add(p + "ln2.g", cfg.dim, 1);
        add(p + "ln2.b", cfg.dim, 1);
        add(p + "ffn.in.w", cfg.ffn, cfg.dim);
        add(p + "ffn.in.b", cfg.ffn, 1);
        add(p + "ffn.out.w", cfg.dim, cfg.ffn);
        add(p + "ffn.out.b", cfg.dim, 1);
    }
    add("final_ln.g", cfg.dim, 1);
    add("final_ln.b", cfg.dim, 1);
    add("cls.w", cfg.num_classes, cfg.dim);
    add("cls.b", cfg.num_classes, 1);
    add("lm.b", cfg.vocab_size, 1);
}

const ParamInfo& ParamLayout::find(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw ConfigError("unknown parameter tensor: " + std::string(name));
}

const ParamInfo& ParamLayout::owner_of(size_t flat_index) const {
    for (const auto& e : entries_)
        if (flat_index >= e.offset && flat_index < e.offset + e.count()) return e;
    throw ConfigError("parameter index out of range");
}

double* EncoderModel::tensor(std::string_view name) {
    return params.data() + layout.find(name).offset;
}
const double* EncoderModel::tensor(std::string_view name) const {
    return params.data() + layout.find(name).offset;
}

EncoderModel init_model(const EncoderConfig& config) {
    config.validate();
    EncoderModel model;
    model.config = config;
    model.layout = ParamLayout(config);
    model.params.assign(model.layout.total(), 0.0);

    size_t tensor_index = 0;
    for (const auto& e : model.layout.entries()) {
        RngStream rng = substream(config.seed, "init", tensor_index++);
        double* p = model.params.data() + e.offset;
        bool is_gain = e.name.ends_with("ln1.g") || e.name.ends_with("ln2.g") ||
                       e.name.ends_with("final_ln.g");
        bool is_bias = e.cols == 1 && !is_gain;
        if (is_gain) {
            std::fill(p, p + e.count(), 1.0);
        } else if (is_bias) {
            // zeros
        } else if (e.name == "embed.tok") {
            double lim = 1.0 / std::sqrt(static_cast<double>(config.dim));
            for (size_t i = 0; i < e.count(); ++i) p[i] = rng.uniform(-lim, lim);
        } else {
            double lim = std::sqrt(6.0 / (e.rows + e.cols));
            for (size_t i = 0; i < e.count(); ++i) p[i] = rng.uniform(-lim, lim);
        }
    }

    model.positional = Mat(config.max_len, config.dim);
    for (int pos = 0; pos < config.max_len; ++pos) {
        for (int i = 0; i < config.dim; i += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(i) / config.dim);
            model.positional.at(pos, i) = std::sin(pos * freq);
            if (i + 1 < config.dim) model.positional.at(pos, i + 1) = std::cos(pos * freq);
        }
    }
    return model;
}

namespace {

struct LayerWs {
    Mat xhat1;
    std::vector<double> inv_sig1;
    Mat a, q, k, v, ctx;
    std::vector<Mat> probs; // per head, L x L
    std::vector<uint8_t> drop_ao;
    Mat xhat2;
    std::vector<double> inv_sig2;
    Mat a2, f1, g;
    std::vector<uint8_t> drop_f2;
};

struct SeqWs {
    std::vector<int32_t> ids;
    std::vector<uint8_t> drop_emb;
    std::vector<LayerWs> layers;
    Mat xhatF;
    std::vector<double> inv_sigF;
    Mat hidden;
    std::vector<double> class_logits;
    bool dropout_active = false;
    double keep = 1.0;
};

void layernorm_forward(const Mat& x, const double* gain, const double* bias, Mat& out,
                       Mat& xhat, std::vector<double>& inv_sig) {
    const int L = x.rows, d = x.cols;
    inv_sig.resize(L);
    for (int i = 0; i < L; ++i) {
        const double* xi = x.row(i);
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xi[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = xi[j] - mu;
            var += c * c;
        }
        var /= d;
        double is = 1.0 / std::sqrt(var + kLnEps);
        inv_sig[i] = is;
        double* xh = xhat.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mu) * is;
            oi[j] = xh[j] * gain[j] + bias[j];
        }
    }
}

// dx += backward of layernorm given upstream dy; accumulates dgain/dbias.
void layernorm_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& inv_sig,
                        const double* gain, Mat& dx, double* dgain, double* dbias) {
    const int L = dy.rows, d = dy.cols;
    std::vector<double> dxhat(d);
    for (int i = 0; i < L; ++i) {
        const double* dyi = dy.row(i);
        const double* xh = xhat.row(i);
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
            dbias[j] += dyi[j];
            dgain[j] += dyi[j] * xh[j];
            dxhat[j] = dyi[j] * gain[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
        }
        m1 /= d;
        m2 /= d;
        double* dxi = dx.row(i);
        for (int j = 0; j < d; ++j) dxi[j] += inv_sig[i] * (dxhat[j] - m1 - xh[j] * m2);
    }
}

void linear_forward(const Mat& x, const double* w, const double* b, int dout, Mat& out) {
    // w is dout x din row-major; out = x w^T + b
    const int L = x.rows, din = x.cols;
    for (int i = 0; i < L; ++i) {
        const double* xi = x.row(i);
        double* oi = out.row(i);
        for (int o = 0; o < dout; ++o) oi[o] = dot(xi, w + static_cast<size_t>(o) * din, din) + b[o];
    }
}

// dx += dy w; dw += dy^T x; db += colsum(dy)
void linear_backward(const Mat& dy, const Mat& x, const double* w, int dout, Mat& dx, double* dw,
                     double* db) {
    const int L = x.rows, din = x.cols;
    for (int i = 0; i < L; ++i) {
        const double* dyi = dy.row(i);
        const double* xi = x.row(i);
        double* dxi = dx.row(i);
        for (int o = 0; o < dout; ++o) {
            double g = dyi[o];
            if (g == 0.0) continue;
            axpy(g, w + static_cast<size_t>(o) * din, dxi, din);
            axpy(g, xi, dw + static_cast<size_t>(o) * din, din);
            db[o] += g;
        }
    }
}

void apply_dropout(Mat& x, std::vector<uint8_t>& mask, double keep, RngStream& rng) {
    mask.resize(x.size());
    double inv_keep = 1.0 / keep;
    for (size_t i = 0; i < x.size(); ++i) {
        bool kept = rng.uniform() < keep;
        mask[i] = kept;
        x.a[i] = kept ? x.a[i] * inv_keep : 0.0;
    }
}

void dropout_backward(Mat& d, const std::vector<uint8_t>& mask, double keep) {
    double inv_keep = 1.0 / keep;
    for (size_t i = 0; i < d.size(); ++i) d.a[i] = mask[i] ? d.a[i] * inv_keep : 0.0;
}

void check_ids(const EncoderConfig& cfg, std::span<const int32_t> ids) {
    if (ids.empty()) throw ConfigError("empty input sequence");
    if (static_cast<int>(ids.size()) > cfg.max_len)
        throw ConfigError("input length " + std::to_string(ids.size()) + " exceeds max_len " +
                          std::to_string(cfg.max_len) + "; caller must pre-truncate");
    for (int32_t id : ids)
        if (id < 0 || id >= cfg.vocab_size)
            throw ConfigError("token id out of range: " + std::to_string(id));
}

// Forward pass storing everything needed for backward. x is scratch.
void run_forward(const EncoderModel& model, std::span<const int32_t> ids, bool train_mode,
                 RngStream* rng, SeqWs& ws) {
    const EncoderConfig& cfg = model.config;
    check_ids(cfg, ids);
    const int L = static_cast<int>(ids.size());
    const int d = cfg.dim, H = cfg.heads, dh = cfg.head_dim(), F = cfg.ffn;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ws.ids.assign(ids.begin(), ids.end());
    ws.dropout_active = train_mode && cfg.dropout > 0.0 && rng != nullptr;
    ws.keep = 1.0 - cfg.dropout;

    Mat x(L, d);
    const double* emb = model.tensor("embed.tok");
    for (int i = 0; i < L; ++i) {
        const double* e = emb + static_cast<size_t>(ids[i]) * d;
        const double* p = model.positional.row(i);
        double* xi = x.row(i);
        for (int j = 0; j < d; ++j) xi[j] = e[j] + p[j];
    }
    if (ws.dropout_active) apply_dropout(x, ws.drop_emb, ws.keep, *rng);

    ws.layers.assign(cfg.layers, LayerWs{});
    for (int l = 0; l < cfg.layers; ++l) {
        LayerWs& lw = ws.layers[l];
        std::string p = layer_prefix(l);
        lw.xhat1 = Mat(L, d);
        lw.a = Mat(L, d);
        layernorm_forward(x, model.tensor(p + "ln1.g"), model.tensor(p + "ln1.b"), lw.a,
                          lw.xhat1, lw.inv_sig1);

        lw.q = Mat(L, d);
        lw.k = Mat(L, d);
        lw.v = Mat(L, d);
        linear_forward(lw.a, model.tensor(p + "attn.q.w"), model.tensor(p + "attn.q.b"), d, lw.q);
        linear_forward(lw.a, model.tensor(p + "attn.k.w"), model.tensor(p + "attn.k.b"), d, lw.k);
        linear_forward(lw.a, model.tensor(p + "attn.v.w"), model.tensor(p + "attn.v.b"), d, lw.v);

        lw.ctx = Mat(L, d);
        lw.probs.assign(H, Mat());
        for (int h = 0; h < H; ++h) {
            Mat& P = lw.probs[h];
            P = Mat(L, L);
            const int off = h * dh;
            for (int i = 0; i < L; ++i) {
                double* Pi = P.row(i);
                const double* qi = lw.q.row(i) + off;
                for (int j = 0; j < L; ++j) Pi[j] = dot(qi, lw.k.row(j) + off, dh) * scale;
                softmax_inplace(Pi, L);
                double* ci = lw.ctx.row(i) + off;
                for (int j = 0; j < L; ++j) axpy(Pi[j], lw.v.row(j) + off, ci, dh);
            }
        }

        Mat ao(L, d);
        linear_forward(lw.ctx, model.tensor(p + "attn.out.w"), model.tensor(p + "attn.out.b"), d,
                       ao);
        if (ws.dropout_active) apply_dropout(ao, lw.drop_ao, ws.keep, *rng);
        for (size_t i = 0; i < x.size(); ++i) x.a[i] += ao.a[i];

        lw.xhat2 = Mat(L, d);
        lw.a2 = Mat(L, d);
        layernorm_forward(x, model.tensor(p + "ln2.g"), model.tensor(p + "ln2.b"), lw.a2,
                          lw.xhat2, lw.inv_sig2);

        lw.f1 = Mat(L, F);
        linear_forward(lw.a2, model.tensor(p + "ffn.in.w"), model.tensor(p + "ffn.in.b"), F,
                       lw.f1);
        lw.g = Mat(L, F);
        for (size_t i = 0; i < lw.f1.size(); ++i) lw.g.a[i] = gelu(lw.f1.a[i]);
        Mat f2(L, d);
        linear_forward(lw.g, model.tensor(p + "ffn.out.w"), model.tensor(p + "ffn.out.b"), d, f2);
        if (ws.dropout_active) apply_dropout(f2, lw.drop_f2, ws.keep, *rng);
        for (size_t i = 0; i < x.size(); ++i) x.a[i] += f2.a[i];
    }

    ws.xhatF = Mat(L, d);
    ws.hidden = Mat(L, d);
    layernorm_forward(x, model.tensor("final_ln.g"), model.tensor("final_ln.b"), ws.hidden,
                      ws.xhatF, ws.inv_sigF);

    const double* wc = model.tensor("cls.w");
    const double* bc = model.tensor("cls.b");
    ws.class_logits.resize(cfg.num_classes);
    for (int c = 0; c < cfg.num_classes; ++c)
        ws.class_logits[c] = dot(ws.hidden.row(0), wc + static_cast<size_t>(c) * d, d) + bc[c];
}

// LM logits for one position.
void lm_logits_row(const EncoderModel& model, const SeqWs& ws, int pos, double* out) {
    const int d = model.config.dim;
    const int V = model.config.vocab_size;
    const double* emb = model.tensor("embed.tok");
    const double* blm = model.tensor("lm.b");
    const double* h = ws.hidden.row(pos);
    for (int v = 0; v < V; ++v) out[v] = dot(h, emb + static_cast<size_t>(v) * d, d) + blm[v];
}

// Backward through the trunk given gradient on the final hidden states.
// Head-specific gradients (classifier, LM, contrastive) must already be
// folded into dhidden and the grads buffer by the caller.
void run_backward(const EncoderModel& model, const SeqWs& ws, const Mat& dhidden,
                  std::vector<double>& grads) {
    const EncoderConfig& cfg = model.config;
    const int L = dhidden.rows, d = cfg.dim, H = cfg.heads, dh = cfg.head_dim(), F = cfg.ffn;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    auto g = [&](const std::string& name) { return grads.data() + model.layout.find(name).offset; };

    Mat dx(L, d);
    layernorm_backward(dhidden, ws.xhatF, ws.inv_sigF, model.tensor("final_ln.g"), dx,
                       g("final_ln.g"), g("final_ln.b"));

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerWs& lw = ws.layers[l];
        std::string p = layer_prefix(l);

        // FFN block: x3 = x2 + drop(f2)
        Mat df2 = dx; // gradient wrt f2 after dropout
        if (ws.dropout_active) dropout_backward(df2, lw.drop_f2, ws.keep);
        Mat dg(L, F);
        linear_backward(df2, lw.g, model.tensor(p + "ffn.out.w"), d, dg, g(p + "ffn.out.w"),
                        g(p + "ffn.out.b"));
        // reuse dg as df1
        for (size_t i = 0; i < dg.size(); ++i) dg.a[i] *= gelu_grad(lw.f1.a[i]);
        Mat da2(L, d);
        linear_backward(dg, lw.a2, model.tensor(p + "ffn.in.w"), F, da2, g(p + "ffn.in.w"),
                        g(p + "ffn.in.b"));
        layernorm_backward(da2, lw.xhat2, lw.inv_sig2, model.tensor(p + "ln2.g"), dx,
                           g(p + "ln2.g"), g(p + "ln2.b"));

        // Attention block: x2 = x1 + drop(ao)
        Mat dao = dx;
        if (ws.dropout_active) dropout_backward(dao, lw.drop_ao, ws.keep);
        Mat dctx(L, d);
        linear_backward(dao, lw.ctx, model.tensor(p + "attn.out.w"), d, dctx,
                        g(p + "attn.out.w"), g(p + "attn.out.b"));

        Mat dq(L, d), dk(L, d), dv(L, d);
        std::vector<double> dP(L), dS(L);
        for (int h = 0; h < H; ++h) {
            const Mat& P = lw.probs[h];
            const int off = h * dh;
            for (int i = 0; i < L; ++i) {
                const double* dci = dctx.row(i) + off;
                const double* Pi = P.row(i);
                // dP and dv
                for (int j = 0; j < L; ++j) {
                    dP[j] = dot(dci, lw.v.row(j) + off, dh);
                    axpy(Pi[j], dci, dv.row(j) + off, dh);
                }
                // softmax backward
                double inner = 0.0;
                for (int j = 0; j < L; ++j) inner += dP[j] * Pi[j];
                for (int j = 0; j < L; ++j) dS[j] = (dP[j] - inner) * Pi[j] * scale;
                // dq, dk
                double* dqi = dq.row(i) + off;
                const double* qi = lw.q.row(i) + off;
                for (int j = 0; j < L; ++j) {
                    axpy(dS[j], lw.k.row(j) + off, dqi, dh);
                    axpy(dS[j], qi, dk.row(j) + off, dh);
                }
            }
        }

        Mat da(L, d);
        linear_backward(dq, lw.a, model.tensor(p + "attn.q.w"), d, da, g(p + "attn.q.w"),
                        g(p + "attn.q.b"));
        linear_backward(dk, lw.a, model.tensor(p + "attn.k.w"), d, da, g(p + "attn.k.w"),
                        g(p + "attn.k.b"));
        linear_backward(dv, lw.a, model.tensor(p + "attn.v.w"), d, da, g(p + "attn.v.w"),
                        g(p + "attn.v.b"));
        layernorm_backward(da, lw.xhat1, lw.inv_sig1, model.tensor(p + "ln1.g"), dx,
                           g(p + "ln1.g"), g(p + "ln1.b"));
    }

    if (ws.dropout_active) dropout_backward(dx, ws.drop_emb, ws.keep);
    double* demb = g("embed.tok");
    for (int i = 0; i < L; ++i)
        axpy(1.0, dx.row(i), demb + static_cast<size_t>(ws.ids[i]) * d, d);
}

} // namespace

ForwardTrace forward(const EncoderModel& model, std::span<const int32_t> ids, ForwardMode mode,
                     bool train_mode, RngStream* rng) {
    SeqWs ws;
    run_forward(model, ids, train_mode, rng, ws);
    ForwardTrace trace;
    trace.hidden = ws.hidden;
    trace.pooled.assign(ws.hidden.row(0), ws.hidden.row(0) + model.config.dim);
    trace.class_logits = ws.class_logits;
    trace.attention.resize(model.config.layers);
    for (int l = 0; l < model.config.layers; ++l) trace.attention[l] = ws.layers[l].probs;
    if (mode == ForwardMode::lm) {
        const int L = static_cast<int>(ids.size());
        trace.lm_logits = Mat(L, model.config.vocab_size);
        for (int i = 0; i < L; ++i) lm_logits_row(model, ws, i, trace.lm_logits.row(i));
    }
    return trace;
}

Mat forward_lm_positions(const EncoderModel& model, std::span<const int32_t> ids,
                         std::span<const int> positions) {
    SeqWs ws;
    run_forward(model, ids, false, nullptr, ws);
    Mat out(static_cast<int>(positions.size()), model.config.vocab_size);
    for (size_t i = 0; i < positions.size(); ++i) {
        int pos = positions[i];
        if (pos < 0 || pos >= static_cast<int>(ids.size()))
            throw ConfigError("lm position out of range");
        lm_logits_row(model, ws, pos, out.row(static_cast<int>(i)));
    }
    return out;
}

namespace {

// -log softmax(logits)[target]; writes softmax into probs.
double cross_entropy(const double* logits, int n, int target, std::vector<double>& probs) {
    probs.assign(logits, logits + n);
    softmax_inplace(probs.data(), n);
    double p = std::max(probs[target], 1e-300);
    return -std::log(p);
}

struct NrtLayout {
    std::vector<int> originals;              // batch indices of originals
    std::vector<std::vector<int>> pseudos;   // per original, batch indices
    int pseudo_per_original = 0;
};

NrtLayout nrt_layout(const std::vector<BatchItem>& batch) {
    NrtLayout lay;
    for (size_t i = 0; i < batch.size(); ++i)
        if (batch[i].source < 0) lay.originals.push_back(static_cast<int>(i));
    if (lay.originals.empty()) throw ConfigError("noise_resistant batch has no original samples");
    std::vector<int> pos_of(batch.size(), -1);
    for (size_t i = 0; i < lay.originals.size(); ++i) pos_of[lay.originals[i]] = static_cast<int>(i);
    lay.pseudos.assign(lay.originals.size(), {});
    for (size_t i = 0; i < batch.size(); ++i) {
        const BatchItem& it = batch[i];
        if (it.source < 0) continue;
        if (it.source >= static_cast<int>(batch.size()) || pos_of[it.source] < 0)
            throw ConfigError("pseudo sample source index does not point at an original");
        lay.pseudos[pos_of[it.source]].push_back(static_cast<int>(i));
    }
    lay.pseudo_per_original = static_cast<int>(lay.pseudos[0].size());
    for (const auto& v : lay.pseudos)
        if (static_cast<int>(v.size()) != lay.pseudo_per_original)
            throw ConfigError("pseudo lists must have equal length across originals");
    return lay;
}

} // namespace

LossGrads loss_and_grads(const EncoderModel& model, const std::vector<BatchItem>& batch,
                         Objective objective, const BatchOptions& options) {
    if (batch.empty()) throw ConfigError("empty batch");
    const EncoderConfig& cfg = model.config;
    const int d = cfg.dim;
    const int m = cfg.num_classes;
    const int V = cfg.vocab_size;

    LossGrads out;
    out.grads.assign(model.layout.total(), 0.0);

    std::vector<SeqWs> ws(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        RngStream drop = substream(options.dropout_seed, "dropout", i);
        run_forward(model, batch[i].ids, options.train_mode, &drop, ws[i]);
    }

    const double* wc = model.tensor("cls.w");
    const double* emb = model.tensor("embed.tok");
    double* gwc = out.grads.data() + model.layout.find("cls.w").offset;
    double* gbc = out.grads.data() + model.layout.find("cls.b").offset;
    double* gemb = out.grads.data() + model.layout.find("embed.tok").offset;
    double* gblm = out.grads.data() + model.layout.find("lm.b").offset;

    std::vector<Mat> dhidden(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) dhidden[i] = Mat(ws[i].hidden.rows, d);

    auto add_class_grad = [&](size_t i, const std::vector<double>& dlogits) {
        const double* h0 = ws[i].hidden.row(0);
        double* dh0 = dhidden[i].row(0);
        for (int c = 0; c < m; ++c) {
            double gl = dlogits[c];
            if (gl == 0.0) continue;
            axpy(gl, wc + static_cast<size_t>(c) * d, dh0, d);
            axpy(gl, h0, gwc + static_cast<size_t>(c) * d, d);
            gbc[c] += gl;
        }
    };

    auto classify_item = [&](size_t i, double weight) {
        const BatchItem& it = batch[i];
        if (it.label < 0 || it.label >= m) throw ConfigError("batch item missing a valid label");
        std::vector<double> probs;
        double ce = cross_entropy(ws[i].class_logits.data(), m, it.label, probs);
        int argmax = static_cast<int>(std::max_element(ws[i].class_logits.begin(),
                                                       ws[i].class_logits.end()) -
                                      ws[i].class_logits.begin());
        out.correct += (argmax == it.label);
        out.total += 1;
        std::vector<double> dlogits(m);
        for (int c = 0; c < m; ++c) dlogits[c] = (probs[c] - (c == it.label ? 1.0 : 0.0)) * weight;
        add_class_grad(i, dlogits);
        return ce;
    };

    if (objective == Objective::ce_classify) {
        double w = 1.0 / static_cast<double>(batch.size());
        double total = 0.0;
        for (size_t i = 0; i < batch.size(); ++i) total += classify_item(i, w);
        out.loss = total * w;
        out.classification = out.loss;
    } else if (objective == Objective::ce_lm_masked) {
        int supervised_seqs = 0;
        for (const auto& it : batch)
            if (!it.masked_positions.empty()) ++supervised_seqs;
        if (supervised_seqs == 0) throw RuntimeError("no supervised positions in ce_lm_masked batch");
        double seq_w = 1.0 / static_cast<double>(supervised_seqs);
        double total = 0.0;
        std::vector<double> logits(V), probs;
        for (size_t i = 0; i < batch.size(); ++i) {
            const BatchItem& it = batch[i];
            if (it.masked_positions.empty()) continue;
            if (it.target_ids.size() != it.ids.size())
                throw ConfigError("target_ids must align with ids");
            double pos_w = seq_w / static_cast<double>(it.masked_positions.size());
            double seq_loss = 0.0;
            for (int32_t pos : it.masked_positions) {
                if (pos < 0 || pos >= static_cast<int32_t>(it.ids.size()))
                    throw ConfigError("masked position out of range");
                int32_t target = it.target_ids[pos];
                if (target < 0 || target >= V) throw ConfigError("target id out of range");
                lm_logits_row(model, ws[i], pos, logits.data());
                seq_loss += cross_entropy(logits.data(), V, target, probs);
                // tied LM head backward
                const double* h = ws[i].hidden.row(pos);
                double* dh = dhidden[i].row(pos);
                for (int v = 0; v < V; ++v) {
                    double gl = (probs[v] - (v == target ? 1.0 : 0.0)) * pos_w;
                    axpy(gl, emb + static_cast<size_t>(v) * d, dh, d);
                    axpy(gl, h, gemb + static_cast<size_t>(v) * d, d);
                    gblm[v] += gl;
                }
            }
            total += seq_loss / static_cast<double>(it.masked_positions.size());
        }
        out.loss = total * seq_w;
    } else { // noise_resistant
        NrtLayout lay = nrt_layout(batch);
        const int k = static_cast<int>(lay.originals.size());
        const int B = lay.pseudo_per_original;

        // classification term over originals (b=0) and pseudos
        double ce_w = 1.0 / static_cast<double>(k * (B + 1));
        double ce_total = 0.0;
        for (size_t i = 0; i < batch.size(); ++i) ce_total += classify_item(i, ce_w);
        out.classification = ce_total * ce_w;

        // contrastive term over originals only
        double lc = 0.0;
        if (options.use_contrastive && k >= 2) {
            std::vector<const double*> h(k);
            std::vector<double> norm(k);
            for (int i = 0; i < k; ++i) {
                h[i] = ws[lay.originals[i]].hidden.row(0);
                norm[i] = std::sqrt(dot(h[i], h[i], d));
                if (norm[i] < 1e-12) throw RuntimeError("zero-norm representation in contrastive loss");
            }
            std::vector<int> labels(k);
            for (int i = 0; i < k; ++i) labels[i] = batch[lay.originals[i]].label;

            double z = 0.0;
            Mat sim(k, k);
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    if (j == i || labels[j] == labels[i]) continue;
                    double s = dot(h[i], h[j], d) / (norm[i] * norm[j]);
                    sim.at(i, j) = s;
                    z += std::exp(s / options.tau);
                }
            if (z > 0.0) {
                lc = std::log(z) / k;
                // d lc / d sim(i,j) over unordered pairs: both ordered terms share sim
                for (int i = 0; i < k; ++i) {
                    for (int j = i + 1; j < k; ++j) {
                        if (labels[j] == labels[i]) continue;
                        double s = sim.at(i, j);
                        double coef = 2.0 * std::exp(s / options.tau) / (k * z * options.tau);
                        double inv_ij = 1.0 / (norm[i] * norm[j]);
                        double* dhi = dhidden[lay.originals[i]].row(0);
                        double* dhj = dhidden[lay.originals[j]].row(0);
                        for (int t = 0; t < d; ++t) {
                            dhi[t] += coef * (h[j][t] * inv_ij - s * h[i][t] / (norm[i] * norm[i]));
                            dhj[t] += coef * (h[i][t] * inv_ij - s * h[j][t] / (norm[j] * norm[j]));
                        }
                    }
                }
            }
        }
        out.contrastive = lc;
        out.loss = out.contrastive + out.classification;
    }

    for (size_t i = 0; i < batch.size(); ++i) run_backward(model, ws[i], dhidden[i], out.grads);
    return out;
}

OptimizerState OptimizerState::create(const EncoderModel& model, double lr, double weight_decay) {
    OptimizerState s;
    s.lr = lr;
    s.weight_decay = weight_decay;
    s.m.assign(model.params.size(), 0.0);
    s.v.assign(model.params.size(), 0.0);
    return s;
}

void optimizer_step(EncoderModel& model, const std::vector<double>& grads, OptimizerState& state) {
    if (grads.size() != model.params.size() || state.m.size() != model.params.size())
        throw ConfigError("gradient/state size mismatch");
    for (size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i]))
            throw RuntimeError("divergence: non-finite gradient in '" +
                               model.layout.owner_of(i).name + "'");
    }
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < grads.size(); ++i) {
        double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        model.params[i] -=
            state.lr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * model.params[i]);
    }
}

} // namespace dcls
