// Decoder-only transformer forward pass with complete activation recording
// and a declarative intervention system (zero ablation, residual patching,
// attention knockout, layer restoration).
//
// Engine conventions: attention uses raw (unscaled) query-key dot products
// and there is no layer normalization; constructed weights bake in whatever
// temperature they need. Blocks run attention then MLP, both added to the
// residual stream. The forward pass is evaluated position by position, so a
// full pass and an incrementally extended pass produce bit-identical values.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "countlab/numerics.hpp"
#include "countlab/tokenizer.hpp"

namespace countlab {

struct SiteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Named embedding channels written by the engine itself. Segment and
// position ids are encoded as +/-1 binary codes so equality tests are exact
// integer dot products. Channels with index -1 are absent.
struct ExtraChannels {
    int one = -1;        // constant 1.0 on every token
    int magnitude = -1;  // integer value of NUMBER tokens (lives in the embedding matrix)
    int ramp = -1;       // position / max_seq
    int seg_begin = -1;
    int seg_bits = 0;    // segment id code; zero vector at position 0
    int pos_begin = -1;
    int pos_bits = 0;    // position code
    int prev_begin = -1;
    int prev_bits = 0;   // code of position-1; zero vector at position 0
};

struct ModelConfig {
    int n_layers = 0;
    int n_heads = 0;
    int d_model = 0;
    int d_head = 0;
    int d_mlp = 0;
    int vocab_size = 0;
    int max_seq = 0;
    ExtraChannels extra;
    // Token metadata the engine needs for generation and segment tracking.
    int separator_token = -1;
    int eos_token = -1;
    // Alternative knockout semantics: zero attention weights after softmax
    // without renormalizing. Default is pre-softmax -inf masking.
    bool knockout_post_softmax = false;

    void validate() const {
        if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_head < 1 || vocab_size < 1 ||
            max_seq < 1 || d_mlp < 0) {
            throw ShapeError("ModelConfig: all counts must be >= 1");
        }
        if (d_head * n_heads > d_model) {
            throw ShapeError("ModelConfig: d_head * n_heads must be <= d_model");
        }
    }
};

struct HeadWeights {
    Matrix wq, wk, wv;  // d_model x d_head
    Matrix wo;          // d_head x d_model
    bool all_zero = true;
};

struct LayerWeights {
    std::vector<HeadWeights> heads;
    Matrix mlp_in;                 // d_model x width (width may be 0)
    std::vector<double> mlp_bias;  // width
    Matrix mlp_out;                // width x d_model
    bool mlp_zero = true;
};

struct ModelWeights {
    ModelConfig config;
    Matrix embedding;  // vocab_size x d_model
    Matrix unembed;    // vocab_size x d_model (row t = readout for token t)
    std::vector<LayerWeights> layers;

    // Recompute zero-block flags and check shape consistency.
    void finalize() {
        config.validate();
        auto expect = [](const Matrix& m, int r, int c, const char* name) {
            if (m.rows() != r || m.cols() != c) {
                throw ShapeError(std::string("ModelWeights: bad shape for ") + name);
            }
            if (!m.all_finite()) {
                throw NumericError(std::string("ModelWeights: non-finite entries in ") + name);
            }
        };
        expect(embedding, config.vocab_size, config.d_model, "embedding");
        expect(unembed, config.vocab_size, config.d_model, "unembed");
        if (static_cast<int>(layers.size()) != config.n_layers) {
            throw ShapeError("ModelWeights: layer count mismatch");
        }
        for (LayerWeights& layer : layers) {
            if (static_cast<int>(layer.heads.size()) != config.n_heads) {
                throw ShapeError("ModelWeights: head count mismatch");
            }
            for (HeadWeights& h : layer.heads) {
                expect(h.wq, config.d_model, config.d_head, "wq");
                expect(h.wk, config.d_model, config.d_head, "wk");
                expect(h.wv, config.d_model, config.d_head, "wv");
                expect(h.wo, config.d_head, config.d_model, "wo");
                h.all_zero = h.wq.all_zero() && h.wk.all_zero() && h.wv.all_zero() &&
                             h.wo.all_zero();
            }
            const int width = layer.mlp_in.cols();
            if (width > config.d_mlp) {
                throw ShapeError("ModelWeights: MLP width exceeds d_mlp");
            }
            expect(layer.mlp_in, config.d_model, width, "mlp_in");
            expect(layer.mlp_out, width, config.d_model, "mlp_out");
            if (static_cast<int>(layer.mlp_bias.size()) != width) {
                throw ShapeError("ModelWeights: MLP bias width mismatch");
            }
            layer.mlp_zero = width == 0 || (layer.mlp_in.all_zero() && layer.mlp_out.all_zero());
        }
    }
};

// ---------------------------------------------------------------------------
// Activation trace

struct ActivationTrace {
    int length = 0;
    Matrix embed;                                // T x d_model, post-embedding
    std::vector<Matrix> resid;                   // [layer] T x d_model, post-block
    std::vector<std::vector<Matrix>> attn;       // [layer][head] T x T
    std::vector<std::vector<Matrix>> head_out;   // [layer][head] T x d_head
    Matrix logits;                               // T x vocab

    bool operator==(const ActivationTrace& o) const {
        return length == o.length && embed == o.embed && resid == o.resid && attn == o.attn &&
               head_out == o.head_out && logits == o.logits;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["length"] = length;
        nlohmann::json res = nlohmann::json::array();
        for (size_t l = 0; l < resid.size(); ++l) {
            for (int p = 0; p < resid[l].rows(); ++p) {
                nlohmann::json rec;
                rec["layer"] = l;
                rec["position"] = p;
                rec["vector"] = std::vector<double>(resid[l].row(p), resid[l].row(p) + resid[l].cols());
                res.push_back(std::move(rec));
            }
        }
        j["resid"] = std::move(res);
        nlohmann::json lg = nlohmann::json::array();
        for (int p = 0; p < logits.rows(); ++p) {
            lg.push_back(std::vector<double>(logits.row(p), logits.row(p) + logits.cols()));
        }
        j["logits"] = std::move(lg);
        return j;
    }
};

struct TraceOptions {
    bool record_embed = true;
    bool record_resid = true;
    bool record_attn = true;
    bool record_head_out = true;
    bool record_logits = true;

    static TraceOptions none() { return {false, false, false, false, false}; }
    static TraceOptions resid_only() { return {true, true, false, false, true}; }
};

// ---------------------------------------------------------------------------
// Interventions

// Zeroes the positions' residual state at the post-block write points of the
// listed layers, so attention at layer l+1 onward reads zero vectors for
// them. Layer 0 still sees the raw embeddings, mirroring ablation of cached
// activations after a clean context pass.
struct ZeroAblate {
    std::vector<int> positions;
    std::vector<int> layers;
};

struct PatchResid {
    const ActivationTrace* source = nullptr;
    int src_pos = -1;
    int dst_pos = -1;
    std::vector<int> layers;  // post-block write points
};

struct Knockout {
    int layer = -1;
    int head = -1;
    std::vector<int> query_pos;
    std::vector<int> key_pos;
};

struct RestoreLayer {
    const ActivationTrace* source = nullptr;  // clean run
    std::vector<int> positions;
    int layer = -1;
};

using Intervention = std::variant<ZeroAblate, PatchResid, Knockout, RestoreLayer>;

// ---------------------------------------------------------------------------
// Forward pass engine

namespace detail {

// Per-(layer, head) K/V cache used for position-by-position evaluation.
struct HeadState {
    std::vector<double> k;  // len * d_head
    std::vector<double> v;
};

inline void check_positions(const std::vector<int>& ps, int limit, const char* what) {
    for (int p : ps) {
        if (p < 0 || p >= limit) {
            throw SiteError(std::string(what) + ": position " + std::to_string(p) +
                            " out of range [0, " + std::to_string(limit) + ")");
        }
    }
}

inline void check_layers(const std::vector<int>& ls, int n_layers, const char* what) {
    for (int l : ls) {
        if (l < 0 || l >= n_layers) {
            throw SiteError(std::string(what) + ": layer " + std::to_string(l) + " out of range");
        }
    }
}

}  // namespace detail

class ForwardPass {
public:
    ForwardPass(const ModelWeights& weights, std::vector<Intervention> interventions = {},
                TraceOptions opts = {})
        : w_(weights), cfg_(weights.config), iv_(std::move(interventions)), opts_(opts) {
        validate_interventions();
        const int L = cfg_.n_layers;
        head_state_.assign(static_cast<size_t>(L) * cfg_.n_heads, {});
        trace_.resid.assign(opts_.record_resid ? L : 0, Matrix());
        if (opts_.record_attn) {
            trace_.attn.assign(L, std::vector<Matrix>(cfg_.n_heads));
        }
        if (opts_.record_head_out) {
            trace_.head_out.assign(L, std::vector<Matrix>(cfg_.n_heads));
        }
        x_.resize(cfg_.d_model);
        mlp_h_.resize(std::max(1, cfg_.d_mlp));
        last_logits_.resize(cfg_.vocab_size);
    }

    // Evaluate a whole sequence (position by position).
    void run(const TokenSeq& seq) {
        if (seq.length() > cfg_.max_seq) {
            throw SiteError("sequence length exceeds max_seq");
        }
        for (int p = 0; p < seq.length(); ++p) {
            extend(seq.ids[p], seq.segment_ids[p]);
        }
    }

    // Append one token and compute its activations. The segment id defaults
    // to continuing the running segmentation (bumped after separators).
    void extend(int token_id, int segment_id = -1) {
        const int p = length_;
        if (p >= cfg_.max_seq) {
            throw SiteError("extend: sequence length exceeds max_seq");
        }
        if (token_id < 0 || token_id >= cfg_.vocab_size) {
            throw RangeError("extend: token id out of range");
        }
        if (segment_id < 0) segment_id = next_segment_;
        embed_into_x(token_id, p, segment_id);
        store_row(trace_.embed, opts_.record_embed, p, x_.data(), cfg_.d_model);

        for (int l = 0; l < cfg_.n_layers; ++l) {
            attention_block(l, p);
            mlp_block(l, p);
            apply_post_block(l, p);
            nan_check(l, p);
            if (opts_.record_resid) {
                store_row(trace_.resid[l], true, p, x_.data(), cfg_.d_model);
            }
        }
        compute_logits(p);

        ++length_;
        trace_.length = length_;
        next_segment_ = segment_id + (token_id == cfg_.separator_token ? 1 : 0);
    }

    int length() const { return length_; }
    int next_segment() const { return next_segment_; }
    const std::vector<double>& last_logits() const { return last_logits_; }

    // Trim growth slack so trace matrices have their exact final shapes.
    ActivationTrace take_trace() {
        const int T = length_;
        if (opts_.record_embed) trace_.embed = shrink(trace_.embed, T, cfg_.d_model);
        for (Matrix& m : trace_.resid) m = shrink(m, T, cfg_.d_model);
        for (auto& layer : trace_.attn) {
            for (Matrix& m : layer) m = shrink(m, T, T);
        }
        for (auto& layer : trace_.head_out) {
            for (Matrix& m : layer) m = shrink(m, T, cfg_.d_head);
        }
        if (opts_.record_logits) trace_.logits = shrink(trace_.logits, T, cfg_.vocab_size);
        return std::move(trace_);
    }

private:
    void validate_interventions() {
        for (const Intervention& iv : iv_) {
            if (const auto* z = std::get_if<ZeroAblate>(&iv)) {
                detail::check_positions(z->positions, cfg_.max_seq, "ZeroAblate");
                detail::check_layers(z->layers, cfg_.n_layers, "ZeroAblate");
                for (int l : z->layers) {
                    for (int p : z->positions) {
                        post_zero_.insert(key(l, p));
                    }
                }
            } else if (const auto* pr = std::get_if<PatchResid>(&iv)) {
                if (pr->source == nullptr) throw PatchError("PatchResid: null source trace");
                detail::check_layers(pr->layers, cfg_.n_layers, "PatchResid");
                if (pr->dst_pos < 0 || pr->dst_pos >= cfg_.max_seq) {
                    throw SiteError("PatchResid: destination position out of range");
                }
                if (pr->src_pos < 0 || pr->src_pos >= pr->source->length) {
                    throw PatchError("PatchResid: source position out of range");
                }
                if (pr->source->resid.empty() ||
                    pr->source->resid.front().cols() != cfg_.d_model) {
                    throw PatchError("PatchResid: source trace lacks compatible residuals");
                }
                for (int l : pr->layers) {
                    post_patch_[key(l, pr->dst_pos)] = {pr->source, l, pr->src_pos};
                }
            } else if (const auto* k = std::get_if<Knockout>(&iv)) {
                if (k->layer < 0 || k->layer >= cfg_.n_layers || k->head < 0 ||
                    k->head >= cfg_.n_heads) {
                    throw SiteError("Knockout: layer/head out of range");
                }
                detail::check_positions(k->query_pos, cfg_.max_seq, "Knockout");
                detail::check_positions(k->key_pos, cfg_.max_seq, "Knockout");
                for (int q : k->query_pos) {
                    auto& keys = knock_[key3(k->layer, k->head, q)];
                    keys.insert(keys.end(), k->key_pos.begin(), k->key_pos.end());
                }
            } else if (const auto* r = std::get_if<RestoreLayer>(&iv)) {
                if (r->source == nullptr) throw PatchError("RestoreLayer: null source trace");
                if (r->layer < 0 || r->layer >= cfg_.n_layers) {
                    throw SiteError("RestoreLayer: layer out of range");
                }
                detail::check_positions(r->positions, cfg_.max_seq, "RestoreLayer");
                for (int p : r->positions) {
                    if (p >= r->source->length) {
                        throw PatchError("RestoreLayer: position beyond source trace");
                    }
                    post_patch_[key(r->layer, p)] = {r->source, r->layer, p};
                }
            }
        }
    }

    static int64_t key(int l, int p) { return static_cast<int64_t>(l) * (1 << 20) + p; }
    static int64_t key3(int l, int h, int q) {
        return (static_cast<int64_t>(l) * 64 + h) * (1 << 20) + q;
    }

    void embed_into_x(int token_id, int p, int segment_id) {
        const double* row = w_.embedding.row(token_id);
        std::copy(row, row + cfg_.d_model, x_.begin());
        const ExtraChannels& ex = cfg_.extra;
        if (ex.ramp >= 0) x_[ex.ramp] = static_cast<double>(p) / cfg_.max_seq;
        if (ex.pos_bits > 0) write_bits(ex.pos_begin, ex.pos_bits, p);
        if (p > 0) {
            if (ex.prev_bits > 0) write_bits(ex.prev_begin, ex.prev_bits, p - 1);
            if (ex.seg_bits > 0) {
                if (segment_id >= (1 << ex.seg_bits)) {
                    throw RangeError("segment id exceeds segment code capacity");
                }
                write_bits(ex.seg_begin, ex.seg_bits, segment_id);
            }
        }
    }

    void write_bits(int begin, int bits, int value) {
        for (int b = 0; b < bits; ++b) {
            x_[begin + b] = ((value >> b) & 1) ? 1.0 : -1.0;
        }
    }

    void attention_block(int l, int p) {
        const LayerWeights& layer = w_.layers[l];
        const int dh = cfg_.d_head;
        // All heads read the same block input; their outputs accumulate here.
        attn_accum_.assign(cfg_.d_model, 0.0);
        for (int h = 0; h < cfg_.n_heads; ++h) {
            const HeadWeights& hw = layer.heads[h];
            detail::HeadState& st = head_state_[static_cast<size_t>(l) * cfg_.n_heads + h];
            if (hw.all_zero) {
                // Zero projections: uniform causal attention, zero output.
                if (opts_.record_attn) {
                    Matrix& am = ensure_cells(trace_.attn[l][h], p + 1, p + 1);
                    double* arow = am.row(p);
                    const double u = 1.0 / (p + 1);
                    for (int k = 0; k <= p; ++k) arow[k] = u;
                }
                if (opts_.record_head_out) {
                    ensure_cells(trace_.head_out[l][h], p + 1, dh);
                }
                continue;
            }
            // q, k, v projections for this position.
            project(hw.wq, q_buf_);
            project(hw.wk, kv_buf_);
            st.k.insert(st.k.end(), kv_buf_.begin(), kv_buf_.begin() + dh);
            project(hw.wv, kv_buf_);
            st.v.insert(st.v.end(), kv_buf_.begin(), kv_buf_.begin() + dh);

            scores_.resize(p + 1);
            for (int k = 0; k <= p; ++k) {
                const double* krow = st.k.data() + static_cast<size_t>(k) * dh;
                double s = 0.0;
                for (int d = 0; d < dh; ++d) s += q_buf_[d] * krow[d];
                scores_[k] = s;
            }
            const std::vector<int>* knocked = find_knock(l, h, p);
            if (knocked != nullptr && !cfg_.knockout_post_softmax) {
                for (int k : *knocked) {
                    if (k <= p) scores_[k] = -std::numeric_limits<double>::infinity();
                }
            }
            softmax_row(l, h, p);
            if (knocked != nullptr && cfg_.knockout_post_softmax) {
                for (int k : *knocked) {
                    if (k <= p) probs_[k] = 0.0;
                }
            }
            if (opts_.record_attn) {
                Matrix& am = ensure_cells(trace_.attn[l][h], p + 1, p + 1);
                std::copy(probs_.begin(), probs_.end(), am.row(p));
            }
            // Weighted value sum.
            out_buf_.assign(dh, 0.0);
            for (int k = 0; k <= p; ++k) {
                const double wgt = probs_[k];
                if (wgt == 0.0) continue;
                const double* vrow = st.v.data() + static_cast<size_t>(k) * dh;
                for (int d = 0; d < dh; ++d) out_buf_[d] += wgt * vrow[d];
            }
            if (opts_.record_head_out) {
                Matrix& om = ensure_cells(trace_.head_out[l][h], p + 1, dh);
                std::copy(out_buf_.begin(), out_buf_.end(), om.row(p));
            }
            // Project back into the residual stream.
            for (int d = 0; d < dh; ++d) {
                const double od = out_buf_[d];
                if (od == 0.0) continue;
                const double* orow = hw.wo.row(d);
                for (int c = 0; c < cfg_.d_model; ++c) attn_accum_[c] += od * orow[c];
            }
        }
        for (int c = 0; c < cfg_.d_model; ++c) x_[c] += attn_accum_[c];
    }

    void mlp_block(int l, int p) {
        (void)p;
        const LayerWeights& layer = w_.layers[l];
        if (layer.mlp_zero) return;
        const int width = layer.mlp_in.cols();
        for (int u = 0; u < width; ++u) mlp_h_[u] = layer.mlp_bias[u];
        for (int c = 0; c < cfg_.d_model; ++c) {
            const double xc = x_[c];
            if (xc == 0.0) continue;
            const double* irow = layer.mlp_in.row(c);
            for (int u = 0; u < width; ++u) mlp_h_[u] += xc * irow[u];
        }
        for (int u = 0; u < width; ++u) {
            const double a = mlp_h_[u] > 0.0 ? mlp_h_[u] : 0.0;
            if (a == 0.0) continue;
            const double* orow = layer.mlp_out.row(u);
            for (int c = 0; c < cfg_.d_model; ++c) x_[c] += a * orow[c];
        }
    }

    void apply_post_block(int l, int p) {
        if (post_zero_.count(key(l, p)) != 0) {
            std::fill(x_.begin(), x_.end(), 0.0);
        }
        auto it = post_patch_.find(key(l, p));
        if (it != post_patch_.end()) {
            const PatchSite& site = it->second;
            const Matrix& src = site.source->resid.at(static_cast<size_t>(site.layer));
            if (site.pos >= src.rows()) {
                throw PatchError("patch source trace too short for requested position");
            }
            const double* row = src.row(site.pos);
            std::copy(row, row + cfg_.d_model, x_.begin());
        }
    }

    void nan_check(int l, int p) {
        for (int c = 0; c < cfg_.d_model; ++c) {
            if (!std::isfinite(x_[c])) {
                throw NumericError("non-finite activation at layer " + std::to_string(l) +
                                   ", position " + std::to_string(p));
            }
        }
    }

    void compute_logits(int p) {
        for (int t = 0; t < cfg_.vocab_size; ++t) {
            const double* row = w_.unembed.row(t);
            double s = 0.0;
            for (int c = 0; c < cfg_.d_model; ++c) s += row[c] * x_[c];
            last_logits_[t] = s;
        }
        if (opts_.record_logits) {
            Matrix& lm = ensure_cells(trace_.logits, p + 1, cfg_.vocab_size);
            std::copy(last_logits_.begin(), last_logits_.end(), lm.row(p));
        }
    }

    void project(const Matrix& wmat, std::vector<double>& out) {
        const int dh = cfg_.d_head;
        out.assign(dh, 0.0);
        for (int c = 0; c < cfg_.d_model; ++c) {
            const double xc = x_[c];
            if (xc == 0.0) continue;
            const double* row = wmat.row(c);
            for (int d = 0; d < dh; ++d) out[d] += xc * row[d];
        }
    }

    void softmax_row(int l, int h, int p) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int k = 0; k <= p; ++k) mx = std::max(mx, scores_[k]);
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw DegenerateRowError("attention row fully masked at layer " + std::to_string(l) +
                                     ", head " + std::to_string(h) + ", query " +
                                     std::to_string(p));
        }
        probs_.resize(p + 1);
        double sum = 0.0;
        for (int k = 0; k <= p; ++k) {
            const double e = std::exp(scores_[k] - mx);
            probs_[k] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int k = 0; k <= p; ++k) {
            if (probs_[k] != 0.0) probs_[k] *= inv;
        }
    }

    const std::vector<int>* find_knock(int l, int h, int q) const {
        auto it = knock_.find(key3(l, h, q));
        return it == knock_.end() ? nullptr : &it->second;
    }

    // Grow a row-major matrix used as an append-only table. Capacity doubles
    // in both dimensions; valid data lives in the top-left corner.
    static Matrix& ensure_cells(Matrix& m, int rows, int cols) {
        if (m.rows() >= rows && m.cols() >= cols) return m;
        const int new_rows = std::max(rows, m.rows() * 2);
        const int new_cols = std::max(cols, m.cols() * 2);
        Matrix grown(new_rows, new_cols);
        for (int r = 0; r < m.rows(); ++r) {
            std::copy(m.row(r), m.row(r) + m.cols(), grown.row(r));
        }
        m = std::move(grown);
        return m;
    }

    static Matrix shrink(const Matrix& m, int rows, int cols) {
        Matrix out(rows, cols);
        for (int r = 0; r < rows && r < m.rows(); ++r) {
            std::copy(m.row(r), m.row(r) + std::min(cols, m.cols()), out.row(r));
        }
        return out;
    }

    static void store_row(Matrix& m, bool enabled, int p, const double* src, int cols) {
        if (!enabled) return;
        ensure_cells(m, p + 1, cols);
        std::copy(src, src + cols, m.row(p));
    }

    struct PatchSite {
        const ActivationTrace* source;
        int layer;
        int pos;
    };

    const ModelWeights& w_;
    const ModelConfig& cfg_;
    std::vector<Intervention> iv_;
    TraceOptions opts_;

    int length_ = 0;
    int next_segment_ = 0;
    std::vector<double> x_;
    std::vector<double> q_buf_, kv_buf_, out_buf_, attn_accum_, mlp_h_;
    std::vector<double> scores_, probs_;
    std::vector<double> last_logits_;
    std::vector<detail::HeadState> head_state_;

    std::set<int64_t> post_zero_;
    std::map<int64_t, PatchSite> post_patch_;
    std::map<int64_t, std::vector<int>> knock_;

    ActivationTrace trace_;
};

// ---------------------------------------------------------------------------
// Public operations

inline ActivationTrace forward(const TokenSeq& seq, const ModelWeights& weights,
                               std::vector<Intervention> interventions = {},
                               TraceOptions opts = {}) {
    ForwardPass fp(weights, std::move(interventions), opts);
    fp.run(seq);
    return fp.take_trace();
}

// Greedy decoding with the low-index tie break. Stops after max_new tokens or
// after emitting the end-of-answer token.
inline TokenSeq generate(const TokenSeq& prompt, const ModelWeights& weights, int max_new,
                         std::vector<Intervention> interventions = {}) {
    if (prompt.length() == 0) {
        throw SiteError("generate: prompt must be non-empty");
    }
    ForwardPass fp(weights, std::move(interventions), TraceOptions::none());
    fp.run(prompt);
    TokenSeq out = prompt;
    for (int i = 0; i < max_new; ++i) {
        const auto [tok, margin] = argmax_with_margin(fp.last_logits());
        (void)margin;
        out.push(tok, tok == weights.config.separator_token);
        if (tok == weights.config.eos_token) break;
        if (out.length() >= weights.config.max_seq) break;
        fp.extend(tok);
    }
    return out;
}

// Pre-softmax knockout of individual (query, key) attention edges for one
// (layer, head): knocked entries go to -inf so surviving mass renormalizes.
// Returns the resulting attention weights.
inline Matrix apply_knockout_semantics(const Matrix& scores,
                                       const std::vector<std::pair<int, int>>& knockouts) {
    Matrix masked = scores;
    for (auto [q, k] : knockouts) {
        if (q < 0 || q >= scores.rows() || k < 0 || k >= scores.cols()) {
            throw SiteError("apply_knockout_semantics: edge out of range");
        }
        masked.at(q, k) = -std::numeric_limits<double>::infinity();
    }
    return row_softmax(masked);
}

// ---------------------------------------------------------------------------
// Weight serialization (deterministic binary format)

namespace detail {

inline void put_i32(std::ostream& os, int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline int32_t get_i32(std::istream& is) {
    int32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
    put_i32(os, m.rows());
    put_i32(os, m.cols());
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
}

inline Matrix get_matrix(std::istream& is) {
    const int rows = get_i32(is);
    const int cols = get_i32(is);
    Matrix m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
    return m;
}

}  // namespace detail

inline void save_weights(const ModelWeights& w, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write("CLWB0001", 8);
    const ModelConfig& c = w.config;
    for (int v : {c.n_layers, c.n_heads, c.d_model, c.d_head, c.d_mlp, c.vocab_size, c.max_seq,
                  c.extra.one, c.extra.magnitude, c.extra.ramp, c.extra.seg_begin,
                  c.extra.seg_bits, c.extra.pos_begin, c.extra.pos_bits, c.extra.prev_begin,
                  c.extra.prev_bits, c.separator_token, c.eos_token,
                  c.knockout_post_softmax ? 1 : 0}) {
        detail::put_i32(os, v);
    }
    detail::put_matrix(os, w.embedding);
    detail::put_matrix(os, w.unembed);
    for (const LayerWeights& layer : w.layers) {
        for (const HeadWeights& h : layer.heads) {
            detail::put_matrix(os, h.wq);
            detail::put_matrix(os, h.wk);
            detail::put_matrix(os, h.wv);
            detail::put_matrix(os, h.wo);
        }
        detail::put_matrix(os, layer.mlp_in);
        detail::put_i32(os, static_cast<int32_t>(layer.mlp_bias.size()));
        os.write(reinterpret_cast<const char*>(layer.mlp_bias.data()),
                 static_cast<std::streamsize>(layer.mlp_bias.size() * 8));
        detail::put_matrix(os, layer.mlp_out);
    }
    if (!os) throw IoError("write failed: " + path);
}

inline ModelWeights load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "CLWB0001", 8) != 0) {
        throw IoError("bad weights file magic: " + path);
    }
    ModelWeights w;
    ModelConfig& c = w.config;
    c.n_layers = detail::get_i32(is);
    c.n_heads = detail::get_i32(is);
    c.d_model = detail::get_i32(is);
    c.d_head = detail::get_i32(is);
    c.d_mlp = detail::get_i32(is);
    c.vocab_size = detail::get_i32(is);
    c.max_seq = detail::get_i32(is);
    c.extra.one = detail::get_i32(is);
    c.extra.magnitude = detail::get_i32(is);
    c.extra.ramp = detail::get_i32(is);
    c.extra.seg_begin = detail::get_i32(is);
    c.extra.seg_bits = detail::get_i32(is);
    c.extra.pos_begin = detail::get_i32(is);
    c.extra.pos_bits = detail::get_i32(is);
    c.extra.prev_begin = detail::get_i32(is);
    c.extra.prev_bits = detail::get_i32(is);
    c.separator_token = detail::get_i32(is);
    c.eos_token = detail::get_i32(is);
    c.knockout_post_softmax = detail::get_i32(is) != 0;
    w.embedding = detail::get_matrix(is);
    w.unembed = detail::get_matrix(is);
    w.layers.resize(c.n_layers);
    for (LayerWeights& layer : w.layers) {
        layer.heads.resize(c.n_heads);
        for (HeadWeights& h : layer.heads) {
            h.wq = detail::get_matrix(is);
            h.wk = detail::get_matrix(is);
            h.wv = detail::get_matrix(is);
            h.wo = detail::get_matrix(is);
        }
        layer.mlp_in = detail::get_matrix(is);
        const int width = detail::get_i32(is);
        layer.mlp_bias.resize(width);
        is.read(reinterpret_cast<char*>(layer.mlp_bias.data()),
                static_cast<std::streamsize>(layer.mlp_bias.size() * 8));
        layer.mlp_out = detail::get_matrix(is);
    }
    if (!is) throw IoError("truncated weights file: " + path);
    w.finalize();
    return w;
}

}  // namespace countlab
