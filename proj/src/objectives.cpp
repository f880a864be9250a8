#include "kgclm/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace kgc {

namespace {

// Splits [n, 2k] into real/imag halves and checks evenness.
void check_even(const Array& a, const char* variant) {
    const std::size_t d = a.ndim() == 1 ? a.numel() : a.cols();
    if (d % 2 != 0)
        throw std::invalid_argument(std::string(variant) +
                                    ": vector dimension must be even for complex variants");
}

}  // namespace

// Per-row translational scores over [B,d] role-state matrices -> [B].
Array global_scores_rows(const Array& H, const Array& R, const Array& T, ScoreVariant variant,
                         Tape& tape) {
    switch (variant) {
        case ScoreVariant::transe_l1:
            return tape.row_sums(tape.abs(tape.sub(tape.add(H, R), T)));
        case ScoreVariant::transe_l2: {
            Array d = tape.sub(tape.add(H, R), T);
            return tape.sqrt(tape.row_sums(tape.mul(d, d)));
        }
        case ScoreVariant::rotate: {
            check_even(H, "rotate");
            const std::size_t k = H.cols() / 2;
            Array hr = tape.slice_cols(H, 0, k), hi = tape.slice_cols(H, k, k);
            Array rr = tape.slice_cols(R, 0, k), ri = tape.slice_cols(R, k, k);
            Array tr = tape.slice_cols(T, 0, k), ti = tape.slice_cols(T, k, k);
            // Unit-modulus phase of each complex entry of R; the tiny floor
            // keeps an exact-zero entry from dividing by zero (it then
            // contributes an identity-like rotation with zero gradient).
            Array eps = Array::full({H.rows(), k}, 1e-24);
            Array mag = tape.sqrt(tape.add(tape.add(tape.mul(rr, rr), tape.mul(ri, ri)), eps));
            Array pr = tape.div(rr, mag), pi = tape.div(ri, mag);
            Array rot_re = tape.sub(tape.mul(hr, pr), tape.mul(hi, pi));
            Array rot_im = tape.add(tape.mul(hr, pi), tape.mul(hi, pr));
            Array d_re = tape.abs(tape.sub(rot_re, tr));
            Array d_im = tape.abs(tape.sub(rot_im, ti));
            return tape.add(tape.row_sums(d_re), tape.row_sums(d_im));
        }
        case ScoreVariant::complex_tri: {
            check_even(H, "complex");
            const std::size_t k = H.cols() / 2;
            Array hr = tape.slice_cols(H, 0, k), hi = tape.slice_cols(H, k, k);
            Array rr = tape.slice_cols(R, 0, k), ri = tape.slice_cols(R, k, k);
            Array tr = tape.slice_cols(T, 0, k), ti = tape.slice_cols(T, k, k);
            // Re<h, r, conj(t)>, negated so that lower is better.
            Array s = tape.add(
                tape.add(tape.mul(tape.mul(hr, rr), tr), tape.mul(tape.mul(hi, rr), ti)),
                tape.sub(tape.mul(tape.mul(hr, ri), ti), tape.mul(tape.mul(hi, ri), tr)));
            return tape.neg(tape.row_sums(s));
        }
    }
    throw std::logic_error("global_scores_rows: unhandled variant");
}

std::string score_variant_name(ScoreVariant v) {
    switch (v) {
        case ScoreVariant::transe_l1: return "transe_l1";
        case ScoreVariant::transe_l2: return "transe_l2";
        case ScoreVariant::rotate: return "rotate";
        case ScoreVariant::complex_tri: return "complex";
    }
    return "transe_l1";
}

ScoreVariant score_variant_from_name(const std::string& name) {
    if (name == "transe_l1" || name == "transe") return ScoreVariant::transe_l1;
    if (name == "transe_l2") return ScoreVariant::transe_l2;
    if (name == "rotate") return ScoreVariant::rotate;
    if (name == "complex") return ScoreVariant::complex_tri;
    throw std::invalid_argument("unknown score variant: " + name);
}

Array generation_loss(const Model& model, const EncodedBatch& enc,
                      const std::vector<SerializedTriple>& batch, Tape& tape) {
    std::vector<int> rows;
    std::vector<int> targets;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = batch[b];
        for (std::size_t p = s.query_len; p < s.ids.size(); ++p) {
            rows.push_back(enc.row(b, p - 1));
            targets.push_back(s.ids[p]);
        }
    }
    if (rows.empty())
        throw std::invalid_argument("generation_loss: batch has no answer positions");
    Array logits = model.logits_for_rows(enc, rows, tape);
    return tape.cross_entropy_rows(logits, targets, std::vector<double>(rows.size(), 1.0));
}

Array global_score(const Array& h, const Array& r, const Array& t, ScoreVariant variant,
                   Tape& tape) {
    if (h.ndim() != 1 || r.ndim() != 1 || t.ndim() != 1 || h.numel() != r.numel() ||
        h.numel() != t.numel())
        throw std::invalid_argument("global_score: need three equal-length vectors");
    Array scores = global_scores_rows(tape.stack_rows({h}), tape.stack_rows({r}),
                                tape.stack_rows({t}), variant, tape);
    return tape.sum(scores);
}

Array global_loss(const RoleStates& roles, const LossWeights& weights, Tape& tape,
                  const std::vector<int>* neg_pairing) {
    if (roles.h.rows() == 0) throw std::invalid_argument("global_loss: empty batch");
    Array pos = global_scores_rows(roles.h, roles.r, roles.t, weights.score_variant, tape);
    if (weights.gamma_margin) {
        if (neg_pairing == nullptr || neg_pairing->size() != roles.h.rows())
            throw std::invalid_argument("global_loss: margin form needs a negative pairing");
        Array t_neg = tape.gather_rows(roles.t, *neg_pairing);
        Array neg = global_scores_rows(roles.h, roles.r, t_neg, weights.score_variant, tape);
        Array margin = Array::full({pos.numel()}, weights.gamma);
        return tape.mean(tape.relu(tape.add(tape.sub(pos, neg), margin)));
    }
    Array gamma = Array::scalar(weights.gamma);
    return tape.add(tape.mean(pos), gamma);
}

Array query_mean_states(const EncodedBatch& enc, const std::vector<SerializedTriple>& batch,
                        Tape& tape) {
    std::vector<Array> means;
    means.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = batch[b];
        std::vector<int> rows;
        for (std::size_t p = s.head_begin; p < s.head_end; ++p) rows.push_back(enc.row(b, p));
        for (std::size_t p = s.rel_begin; p < s.rel_end; ++p) rows.push_back(enc.row(b, p));
        if (rows.empty())
            throw std::invalid_argument("query_mean_states: example has an empty query region");
        means.push_back(tape.mean_rows(tape.gather_rows(enc.hidden, rows)));
    }
    return tape.stack_rows(means);
}

Array discriminator_scores(const Array& query_means, const Array& tail_states, Tape& tape) {
    if (query_means.shape() != tail_states.shape())
        throw std::invalid_argument("discriminator_scores: shape mismatch");
    const double inv_sqrt_d = 1.0 / std::sqrt(double(query_means.cols()));
    return tape.scale(tape.row_sums(tape.mul(query_means, tail_states)), inv_sqrt_d);
}

namespace {

// E_pos integrand: -sp(-T) in the standard form, -sp(T) in the alternative.
Array positive_term(const Array& t_scores, JsdPositiveForm form, Tape& tape) {
    if (form == JsdPositiveForm::sp_neg_t)
        return tape.neg(tape.softplus(tape.neg(t_scores)));
    return tape.neg(tape.softplus(t_scores));
}

}  // namespace

Array jsd_mi_estimate(const Array& H_q, const Array& h_T, const Array& H_q_neg,
                      JsdPositiveForm form, Tape& tape) {
    if (H_q.ndim() != 2 || H_q.rows() == 0 || H_q_neg.ndim() != 2 || H_q_neg.rows() == 0)
        throw std::invalid_argument("jsd_mi_estimate: empty query region");
    Array u_pos = tape.stack_rows({tape.mean_rows(H_q)});
    Array u_neg = tape.stack_rows({tape.mean_rows(H_q_neg)});
    Array t = tape.stack_rows({h_T});
    Array t_pos = discriminator_scores(u_pos, t, tape);
    Array t_neg = discriminator_scores(u_neg, t, tape);
    return tape.sub(tape.sum(positive_term(t_pos, form, tape)),
                    tape.sum(tape.softplus(t_neg)));
}

LocalLossResult local_loss(const Array& query_means, const Array& tail_states,
                           const std::vector<int>& neg_pairing, JsdPositiveForm form,
                           Tape& tape) {
    LocalLossResult out;
    if (query_means.rows() < 2) {
        out.value = Array::scalar(0.0);
        out.skipped = true;
        return out;
    }
    if (neg_pairing.size() != query_means.rows())
        throw std::invalid_argument("local_loss: pairing size mismatch");
    for (std::size_t i = 0; i < neg_pairing.size(); ++i)
        if (neg_pairing[i] == int(i))
            throw std::invalid_argument("local_loss: pairing must be a derangement");
    Array t_pos = discriminator_scores(query_means, tail_states, tape);
    Array neg_means = tape.gather_rows(query_means, neg_pairing);
    Array t_neg = discriminator_scores(neg_means, tail_states, tape);
    out.value = tape.sub(tape.mean(tape.softplus(t_neg)),
                         tape.mean(positive_term(t_pos, form, tape)));
    return out;
}

TotalLoss total_loss(const Array& l_g, const Array& l_p, const LocalLossResult& l_e,
                     const LossWeights& weights, Tape& tape) {
    TotalLoss out;
    out.report.l_g = l_g.item();
    out.report.l_p = l_p.item();
    out.report.l_e = l_e.value.item();
    out.report.l_e_skipped = l_e.skipped;
    if (std::isnan(out.report.l_g)) throw std::runtime_error("total_loss: l_g is NaN");
    if (std::isnan(out.report.l_p)) throw std::runtime_error("total_loss: l_p is NaN");
    if (std::isnan(out.report.l_e)) throw std::runtime_error("total_loss: l_e is NaN");

    Array total = l_g;
    if (weights.alpha != 0.0) total = tape.add(total, tape.scale(l_p, weights.alpha));
    if (weights.beta != 0.0 && !l_e.skipped)
        total = tape.add(total, tape.scale(l_e.value, weights.beta));
    out.total = total;
    out.report.total = total.item();
    if (std::isnan(out.report.total)) throw std::runtime_error("total_loss: total is NaN");
    return out;
}

}  // namespace kgc
