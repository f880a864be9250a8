#include "kgclm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kgclm/rand.hpp"

namespace kgc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInitStd = 0.05;
}  // namespace

std::string mask_mode_name(MaskMode m) {
    switch (m) {
        case MaskMode::role_separated: return "role_separated";
        case MaskMode::no_role_sep: return "no_role_sep";
        case MaskMode::full_causal: return "full_causal";
    }
    return "role_separated";
}

MaskMode mask_mode_from_name(const std::string& name) {
    if (name == "role_separated") return MaskMode::role_separated;
    if (name == "no_role_sep") return MaskMode::no_role_sep;
    if (name == "full_causal") return MaskMode::full_causal;
    throw std::invalid_argument("unknown mask mode: " + name);
}

void ModelConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_ff == 0 || max_seq_len == 0 ||
        vocab_size == 0)
        throw std::invalid_argument("ModelConfig: sizes must be positive");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
}

VisibilityMask build_visibility_mask(const SerializedTriple& s, MaskMode mode) {
    const std::size_t n = s.ids.size();
    VisibilityMask mask;
    mask.n = n;
    mask.m.assign(n * n, -kInf);
    auto allow = [&](std::size_t i, std::size_t j) { mask.m[i * n + j] = 0.0; };

    if (mode == MaskMode::full_causal) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) allow(i, j);
        return mask;
    }

    const std::size_t q = s.query_len;
    for (std::size_t i = 0; i < q && i < n; ++i) {
        if (mode == MaskMode::role_separated && i == s.pos_h) {
            allow(i, i);
            for (std::size_t j = s.head_begin; j < s.head_end; ++j) allow(i, j);
        } else if (mode == MaskMode::role_separated && i == s.pos_r) {
            allow(i, i);
            for (std::size_t j = s.rel_begin; j < s.rel_end; ++j) allow(i, j);
        } else {
            for (std::size_t j = 0; j < q; ++j) allow(i, j);
        }
    }
    for (std::size_t i = q; i < n; ++i) {
        for (std::size_t j = 0; j < q; ++j) allow(i, j);
        for (std::size_t j = q; j <= i; ++j) allow(i, j);
    }
    return mask;
}

VisibilityMask pad_visibility_mask(const VisibilityMask& mask, std::size_t padded_len) {
    if (padded_len < mask.n)
        throw std::invalid_argument("pad_visibility_mask: padded length below mask size");
    VisibilityMask out;
    out.n = padded_len;
    out.m.assign(padded_len * padded_len, -kInf);
    for (std::size_t i = 0; i < mask.n; ++i)
        for (std::size_t j = 0; j < mask.n; ++j) out.m[i * padded_len + j] = mask.at(i, j);
    for (std::size_t i = mask.n; i < padded_len; ++i) out.m[i * padded_len + i] = 0.0;
    return out;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed_for(seed, "init"));
    auto dense = [&](std::size_t rows, std::size_t cols) {
        Array a = Array::zeros({rows, cols}, true);
        for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.normal(0.0, kInitStd);
        return a;
    };
    auto zeros_vec = [&](std::size_t d) { return Array::zeros({d}, true); };
    auto ones_vec = [&](std::size_t d) { return Array::full({d}, 1.0, true); };

    const std::size_t d = cfg_.d_model;
    w_.tok_emb = dense(cfg_.vocab_size, d);
    w_.pos_emb = dense(cfg_.max_seq_len, d);
    w_.layers.resize(cfg_.n_layers);
    for (auto& l : w_.layers) {
        l.wq = dense(d, d);
        l.bq = zeros_vec(d);
        l.wk = dense(d, d);
        l.bk = zeros_vec(d);
        l.wv = dense(d, d);
        l.bv = zeros_vec(d);
        l.wo = dense(d, d);
        l.bo = zeros_vec(d);
        l.ln1_g = ones_vec(d);
        l.ln1_b = zeros_vec(d);
        l.ln2_g = ones_vec(d);
        l.ln2_b = zeros_vec(d);
        l.w1 = dense(cfg_.d_ff, d);
        l.b1 = zeros_vec(cfg_.d_ff);
        l.w2 = dense(d, cfg_.d_ff);
        l.b2 = zeros_vec(d);
    }
    w_.lnf_g = ones_vec(d);
    w_.lnf_b = zeros_vec(d);
    if (!cfg_.tie_output) w_.out_proj = dense(cfg_.vocab_size, d);
}

std::vector<Array> Model::parameters() const {
    std::vector<Array> out{w_.tok_emb, w_.pos_emb};
    for (const auto& l : w_.layers) {
        out.insert(out.end(), {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_g, l.ln1_b,
                               l.ln2_g, l.ln2_b, l.w1, l.b1, l.w2, l.b2});
    }
    out.push_back(w_.lnf_g);
    out.push_back(w_.lnf_b);
    if (!cfg_.tie_output) out.push_back(w_.out_proj);
    return out;
}

std::vector<std::string> Model::parameter_names() const {
    std::vector<std::string> out{"tok_emb", "pos_emb"};
    static const char* layer_parts[] = {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                                        "ln1_g", "ln1_b", "ln2_g", "ln2_b",
                                        "w1", "b1", "w2", "b2"};
    for (std::size_t i = 0; i < w_.layers.size(); ++i)
        for (const char* part : layer_parts)
            out.push_back("layer" + std::to_string(i) + "." + part);
    out.push_back("lnf_g");
    out.push_back("lnf_b");
    if (!cfg_.tie_output) out.push_back("out_proj");
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

EncodedBatch Model::forward(const std::vector<SerializedTriple>& batch, Tape& tape) const {
    std::vector<VisibilityMask> masks;
    masks.reserve(batch.size());
    for (const auto& s : batch) masks.push_back(build_visibility_mask(s, cfg_.mask_mode));
    return forward(batch, masks, tape);
}

EncodedBatch Model::forward(const std::vector<SerializedTriple>& batch,
                            const std::vector<VisibilityMask>& masks, Tape& tape) const {
    if (batch.empty()) throw std::invalid_argument("Model::forward: empty batch");
    if (masks.size() != batch.size())
        throw std::invalid_argument("Model::forward: one mask per example required");
    const std::size_t B = batch.size();
    std::size_t T = 0;
    for (const auto& s : batch) {
        if (s.ids.size() > cfg_.max_seq_len)
            throw std::invalid_argument("Model::forward: sequence exceeds max_seq_len");
        T = std::max(T, s.ids.size());
    }

    EncodedBatch enc;
    enc.batch_size = B;
    enc.seq_len = T;
    std::vector<int> flat_ids(B * T, Vocabulary::kPad);
    std::vector<int> flat_pos(B * T);
    for (std::size_t b = 0; b < B; ++b) {
        const auto& s = batch[b];
        enc.lengths.push_back(s.ids.size());
        enc.pos_h.push_back(s.pos_h);
        enc.pos_r.push_back(s.pos_r);
        enc.pos_t.push_back(s.pos_t);
        for (std::size_t p = 0; p < s.ids.size(); ++p) flat_ids[b * T + p] = s.ids[p];
        for (std::size_t p = 0; p < T; ++p) flat_pos[b * T + p] = int(p);
    }

    std::vector<Array> mask_leaves;
    mask_leaves.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
        const VisibilityMask padded = pad_visibility_mask(masks[b], T);
        mask_leaves.push_back(Array::from_values({T, T}, padded.m));
    }

    const std::size_t d = cfg_.d_model;
    const std::size_t hd = d / cfg_.n_heads;
    const double att_scale = 1.0 / std::sqrt(double(hd));

    Array x = tape.add(tape.gather_rows(w_.tok_emb, flat_ids),
                       tape.gather_rows(w_.pos_emb, flat_pos));

    for (const auto& l : w_.layers) {
        Array a = tape.layer_norm_rows(x, l.ln1_g, l.ln1_b);
        Array q = tape.add_row_broadcast(tape.matmul_nt(a, l.wq), l.bq);
        Array k = tape.add_row_broadcast(tape.matmul_nt(a, l.wk), l.bk);
        Array v = tape.add_row_broadcast(tape.matmul_nt(a, l.wv), l.bv);

        std::vector<Array> per_example;
        per_example.reserve(B);
        for (std::size_t b = 0; b < B; ++b) {
            Array qb = tape.slice_rows(q, b * T, T);
            Array kb = tape.slice_rows(k, b * T, T);
            Array vb = tape.slice_rows(v, b * T, T);
            std::vector<Array> head_ctx;
            head_ctx.reserve(cfg_.n_heads);
            for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
                Array qh = tape.slice_cols(qb, h * hd, hd);
                Array kh = tape.slice_cols(kb, h * hd, hd);
                Array vh = tape.slice_cols(vb, h * hd, hd);
                Array scores = tape.scale(tape.matmul_nt(qh, kh), att_scale);
                Array att = tape.softmax_rows(tape.add(scores, mask_leaves[b]));
                head_ctx.push_back(tape.matmul(att, vh));
            }
            per_example.push_back(tape.concat_cols(head_ctx));
        }
        Array ctx = tape.concat_rows(per_example);
        Array attn_out = tape.add_row_broadcast(tape.matmul_nt(ctx, l.wo), l.bo);
        x = tape.add(x, attn_out);

        Array f = tape.layer_norm_rows(x, l.ln2_g, l.ln2_b);
        Array h1 = tape.gelu(tape.add_row_broadcast(tape.matmul_nt(f, l.w1), l.b1));
        Array h2 = tape.add_row_broadcast(tape.matmul_nt(h1, l.w2), l.b2);
        x = tape.add(x, h2);
    }
    enc.hidden = tape.layer_norm_rows(x, w_.lnf_g, w_.lnf_b);
    return enc;
}

Array Model::logits_for_rows(const EncodedBatch& enc, const std::vector<int>& rows,
                             Tape& tape) const {
    Array h = tape.gather_rows(enc.hidden, rows);
    return tape.matmul_nt(h, cfg_.tie_output ? w_.tok_emb : w_.out_proj);
}

Array Model::next_token_logits(const EncodedBatch& enc, std::size_t example, std::size_t i,
                               Tape& tape) const {
    if (i == 0)
        throw std::invalid_argument("next_token_logits: position 0 has no preceding state");
    if (example >= enc.batch_size || i > enc.lengths[example])
        throw std::invalid_argument("next_token_logits: index out of range");
    return logits_for_rows(enc, {enc.row(example, i - 1)}, tape);
}

RoleStates extract_role_states(const EncodedBatch& enc, Tape& tape) {
    std::vector<int> rh, rr, rt;
    for (std::size_t b = 0; b < enc.batch_size; ++b) {
        rh.push_back(enc.row(b, enc.pos_h[b]));
        rr.push_back(enc.row(b, enc.pos_r[b]));
        rt.push_back(enc.row(b, enc.pos_t[b]));
    }
    RoleStates rs;
    rs.h = tape.gather_rows(enc.hidden, rh);
    rs.r = tape.gather_rows(enc.hidden, rr);
    rs.t = tape.gather_rows(enc.hidden, rt);
    return rs;
}

std::string model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["n_layers"] = cfg.n_layers;
    j["n_heads"] = cfg.n_heads;
    j["d_model"] = cfg.d_model;
    j["d_ff"] = cfg.d_ff;
    j["max_seq_len"] = cfg.max_seq_len;
    j["vocab_size"] = cfg.vocab_size;
    j["mask_mode"] = mask_mode_name(cfg.mask_mode);
    j["tie_output"] = cfg.tie_output;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.d_ff = j.at("d_ff").get<std::size_t>();
    cfg.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.mask_mode = mask_mode_from_name(j.at("mask_mode").get<std::string>());
    cfg.tie_output = j.at("tie_output").get<bool>();
    return cfg;
}

void save_checkpoint(const Model& model, const std::string& vocab_hash, std::size_t step,
                     const std::string& path) {
    nlohmann::json header;
    header["format"] = "kgclm-checkpoint-v1";
    header["config"] = nlohmann::json::parse(model_config_to_json(model.config()));
    header["vocab_hash"] = vocab_hash;
    header["step"] = step;
    header["param_order"] = model.parameter_names();
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto& p : model.parameters()) sizes.push_back(p.numel());
    header["param_sizes"] = sizes;

    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << header.dump() << '\n';
    for (const auto& p : model.parameters())
        out.write(reinterpret_cast<const char*>(p.data()),
                  std::streamsize(p.numel() * sizeof(double)));
    if (!out.good()) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("load_checkpoint: missing header in " + path);
    nlohmann::json header = nlohmann::json::parse(header_line);
    if (header.value("format", "") != "kgclm-checkpoint-v1")
        throw std::runtime_error("load_checkpoint: unrecognized format in " + path);

    Checkpoint ckpt;
    ckpt.vocab_hash = header.at("vocab_hash").get<std::string>();
    ckpt.step = header.at("step").get<std::size_t>();
    const ModelConfig cfg = model_config_from_json(header.at("config").dump());
    ckpt.model = Model(cfg, 0);

    auto params = ckpt.model.parameters();
    const auto sizes = header.at("param_sizes");
    if (sizes.size() != params.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (sizes[i].get<std::size_t>() != params[i].numel())
            throw std::runtime_error("load_checkpoint: parameter size mismatch in " + path);
        in.read(reinterpret_cast<char*>(params[i].data()),
                std::streamsize(params[i].numel() * sizeof(double)));
        if (!in.good()) throw std::runtime_error("load_checkpoint: truncated blob in " + path);
    }
    return ckpt;
}

}  // namespace kgc
