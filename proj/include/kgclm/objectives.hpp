#pragma once

#include <string>
#include <vector>

#include "kgclm/array.hpp"
#include "kgclm/model.hpp"

namespace kgc {

enum class ScoreVariant { transe_l1, transe_l2, rotate, complex_tri };

std::string score_variant_name(ScoreVariant v);
ScoreVariant score_variant_from_name(const std::string& name);

// Positive-term form of the Jensen-Shannon estimator. sp_neg_t is the
// standard form -sp(-T) whose value increases with the positive-pair score;
// sp_t (-sp(T)) is kept as a compatibility alternative.
enum class JsdPositiveForm { sp_neg_t, sp_t };

struct LossWeights {
    double alpha = 0.001;  // weight of the translational (global) loss
    double beta = 0.005;   // weight of the mutual-information (local) loss
    double gamma = 0.0;    // additive score offset (gradient-inert by itself)
    ScoreVariant score_variant = ScoreVariant::transe_l1;
    JsdPositiveForm jsd_pos_form = JsdPositiveForm::sp_neg_t;
    // When on, the global loss becomes max(0, score_pos - score_neg + gamma)
    // with in-batch corrupted tails, making gamma an actual margin.
    bool gamma_margin = false;
};

struct LossReport {
    double l_g = 0.0, l_p = 0.0, l_e = 0.0, total = 0.0;
    double grad_norm_g = 0.0, grad_norm_p = 0.0, grad_norm_e = 0.0;
    bool grad_norms_computed = false;
    bool l_e_skipped = false;
};

// Mean negative log-likelihood of the answer region (tail subtokens + [E])
// across the batch; query positions and padding are excluded. Raises if the
// batch has no answer positions at all.
Array generation_loss(const Model& model, const EncodedBatch& enc,
                      const std::vector<SerializedTriple>& batch, Tape& tape);

// Translational-family score of a single (h, r, t) role-state triple; lower
// is better for every variant. rotate/complex split the vector into real
// and imaginary halves and need an even dimension.
Array global_score(const Array& h, const Array& r, const Array& t, ScoreVariant variant,
                   Tape& tape);

// Row-wise scores over [B,d] matrices -> [B]; the batched form of
// global_score, also used by the embedding baselines.
Array global_scores_rows(const Array& H, const Array& R, const Array& T, ScoreVariant variant,
                         Tape& tape);

// Batch mean of (score + gamma) over role states, or the margin form when
// weights.gamma_margin is set (then neg_pairing supplies corrupted tails).
Array global_loss(const RoleStates& roles, const LossWeights& weights, Tape& tape,
                  const std::vector<int>* neg_pairing = nullptr);

// Mean hidden state of the head+relation subtoken positions, one row per
// example. Raises if any example has an empty query region.
Array query_mean_states(const EncodedBatch& enc, const std::vector<SerializedTriple>& batch,
                        Tape& tape);

// T(H_q, h_T) realized as <mean(H_q), h_T>/sqrt(d) per row; no parameters
// beyond the shared trunk.
Array discriminator_scores(const Array& query_means, const Array& tail_states, Tape& tape);

// Single-pair Jensen-Shannon estimate: -sp(-T_pos) - sp(T_neg) in the
// standard form. H_q / H_q_neg are [m,d] query-state matrices, h_T is [d].
Array jsd_mi_estimate(const Array& H_q, const Array& h_T, const Array& H_q_neg,
                      JsdPositiveForm form, Tape& tape);

struct LocalLossResult {
    Array value;
    bool skipped = false;  // batch of one: no in-batch negatives
};

// E_neg[sp(T')] - E_pos[-sp(-T)] over the batch (the negated estimator);
// neg_pairing maps each example to the example donating negative queries
// and must be a derangement.
LocalLossResult local_loss(const Array& query_means, const Array& tail_states,
                           const std::vector<int>& neg_pairing, JsdPositiveForm form,
                           Tape& tape);

struct TotalLoss {
    Array total;
    LossReport report;
};

// total = l_g + alpha*l_p + beta*l_e, with zero-weighted components left out
// of the graph entirely so ablated runs are bit-identical to generation-only
// training. NaN components abort with the component named.
TotalLoss total_loss(const Array& l_g, const Array& l_p, const LocalLossResult& l_e,
                     const LossWeights& weights, Tape& tape);

}  // namespace kgc
