#include "kgclm/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kgclm/rand.hpp"

namespace kgc {

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (weights.beta > 0.0 && batch_size < 2)
        throw std::invalid_argument(
            "TrainConfig: batch_size must be >= 2 when the local loss is active");
    if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
}

std::vector<int> negative_sampler(std::size_t batch_size, std::uint64_t seed) {
    if (batch_size < 2)
        throw std::invalid_argument("negative_sampler: need a batch of at least 2");
    // Sattolo's shuffle yields a uniform single cycle, hence a derangement.
    std::vector<int> p(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) p[i] = int(i);
    Rng rng(seed);
    for (std::size_t i = batch_size - 1; i > 0; --i) {
        const std::size_t j = std::size_t(rng.below(i));
        std::swap(p[i], p[j]);
    }
    return p;
}

std::vector<TrainBatch> make_batches(const std::vector<SerializedTriple>& examples,
                                     const std::vector<Triple>& triples, MaskMode mask_mode,
                                     std::size_t batch_size, std::uint64_t seed,
                                     std::size_t epoch) {
    if (examples.empty()) throw std::invalid_argument("make_batches: empty train split");
    if (examples.size() != triples.size())
        throw std::invalid_argument("make_batches: examples/triples size mismatch");
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed_for(seed, "batches:" + std::to_string(epoch)));
    rng.shuffle(order);

    std::vector<TrainBatch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, order.size() - start);
        TrainBatch b;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = order[start + i];
            b.examples.push_back(examples[idx]);
            b.masks.push_back(build_visibility_mask(examples[idx], mask_mode));
            b.triples.push_back(triples[idx]);
        }
        if (n >= 2)
            b.neg_pairing = negative_sampler(
                n, seed_for(seed, "negpair:" + std::to_string(epoch) + ":" +
                                      std::to_string(start / batch_size)));
        out.push_back(std::move(b));
    }
    return out;
}

std::string step_record_to_json(const StepRecord& rec) {
    nlohmann::json j;
    j["step"] = rec.step;
    j["epoch"] = rec.epoch;
    j["lr"] = rec.lr;
    j["l_g"] = rec.losses.l_g;
    j["l_p"] = rec.losses.l_p;
    j["l_e"] = rec.losses.l_e;
    j["total"] = rec.losses.total;
    j["l_e_skipped"] = rec.losses.l_e_skipped;
    if (rec.losses.grad_norms_computed) {
        j["grad_norm_g"] = rec.losses.grad_norm_g;
        j["grad_norm_p"] = rec.losses.grad_norm_p;
        j["grad_norm_e"] = rec.losses.grad_norm_e;
    }
    return j.dump();
}

namespace {

double grad_l2(const std::vector<Array>& params) {
    double acc = 0.0;
    for (const auto& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) acc += g * g;
    }
    return std::sqrt(acc);
}

void snapshot_grads(const std::vector<Array>& params, std::vector<std::vector<double>>& dst) {
    dst.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].has_grad())
            dst[i] = params[i].grad();
        else
            dst[i].assign(params[i].numel(), 0.0);
    }
}

void clear_grads(Tape& tape, std::vector<Array>& params) {
    tape.zero_grads();
    for (auto& p : params) p.zero_grad();
}

double eval_hits1(const Model& model, const Vocabulary& vocab, const KnowledgeGraph& g,
                  const std::vector<Triple>& queries, const std::vector<Triple>& known,
                  std::size_t beam_width) {
    EvalConfig ecfg;
    ecfg.beam_width = beam_width;
    ecfg.ks = {1};
    EvalReport rep = evaluate_queries(model, vocab, g, queries, known, ecfg, "train-loop");
    return rep.macro.at(1) / 100.0;
}

}  // namespace

TrainResult train(const KnowledgeGraph& g, const DatasetSplit& split, const Vocabulary& vocab,
                  const ModelConfig& mcfg, const TrainConfig& tcfg, Model* out_model) {
    tcfg.validate();
    mcfg.validate();
    if (split.train.empty()) throw std::invalid_argument("train: empty train split");

    Model model(mcfg, tcfg.seed);
    std::vector<Array> params = model.parameters();
    OptimizerConfig ocfg;
    ocfg.kind = tcfg.optimizer;
    ocfg.lr = tcfg.lr;
    Optimizer opt(params, ocfg);

    std::vector<SerializedTriple> serialized;
    serialized.reserve(split.train.size());
    for (const Triple& t : split.train)
        serialized.push_back(serialize_triple(t, g, vocab, mcfg.max_seq_len));

    const bool save = !tcfg.out_dir.empty();
    const std::string ckpt_path =
        save ? (std::filesystem::path(tcfg.out_dir) / "model.ckpt").string() : std::string();
    const std::string best_path =
        save ? (std::filesystem::path(tcfg.out_dir) / "model_best.ckpt").string() : std::string();
    const std::string vocab_hash = vocab.content_hash();

    TrainResult result;
    std::size_t step = 0;
    std::size_t evals_without_improvement = 0;
    bool stop = false;

    std::vector<std::vector<double>> g_gen, g_glob, g_loc;

    for (std::size_t epoch = 0; epoch < tcfg.epochs && !stop; ++epoch) {
        auto batches = make_batches(serialized, split.train, mcfg.mask_mode, tcfg.batch_size,
                                    tcfg.seed, epoch);
        for (const TrainBatch& batch : batches) {
            Tape tape;
            EncodedBatch enc = model.forward(batch.examples, batch.masks, tape);
            Array l_g = generation_loss(model, enc, batch.examples, tape);
            RoleStates roles = extract_role_states(enc, tape);
            Array l_p = global_loss(roles, tcfg.weights, tape,
                                    batch.neg_pairing.empty() ? nullptr : &batch.neg_pairing);
            Array u = query_mean_states(enc, batch.examples, tape);
            LocalLossResult l_e = local_loss(u, roles.t, batch.neg_pairing,
                                             tcfg.weights.jsd_pos_form, tape);
            TotalLoss total = total_loss(l_g, l_p, l_e, tcfg.weights, tape);

            const bool want_norms =
                tcfg.grad_norm_interval > 0 && step % tcfg.grad_norm_interval == 0;
            if (want_norms) {
                // One backward pass per component; the total gradient is
                // their weighted sum, so no fourth pass is needed.
                clear_grads(tape, params);
                tape.backward(l_g);
                total.report.grad_norm_g = grad_l2(params);
                snapshot_grads(params, g_gen);

                if (tcfg.weights.alpha != 0.0) {
                    clear_grads(tape, params);
                    tape.backward(l_p);
                    total.report.grad_norm_p = grad_l2(params);
                    snapshot_grads(params, g_glob);
                }
                if (tcfg.weights.beta != 0.0 && !l_e.skipped) {
                    clear_grads(tape, params);
                    tape.backward(l_e.value);
                    total.report.grad_norm_e = grad_l2(params);
                    snapshot_grads(params, g_loc);
                }
                total.report.grad_norms_computed = true;

                for (std::size_t i = 0; i < params.size(); ++i) {
                    auto& gd = params[i].grad();
                    if (gd.size() != params[i].numel()) gd.assign(params[i].numel(), 0.0);
                    for (std::size_t j = 0; j < gd.size(); ++j) {
                        double v = g_gen[i][j];
                        if (tcfg.weights.alpha != 0.0) v += tcfg.weights.alpha * g_glob[i][j];
                        if (tcfg.weights.beta != 0.0 && !l_e.skipped)
                            v += tcfg.weights.beta * g_loc[i][j];
                        gd[j] = v;
                    }
                }
            } else {
                clear_grads(tape, params);
                tape.backward(total.total);
            }
            opt.step();
            step += 1;

            StepRecord rec;
            rec.step = step;
            rec.epoch = epoch;
            rec.lr = tcfg.lr;
            rec.losses = total.report;
            result.log.push_back(rec);

            if (save && tcfg.checkpoint_interval > 0 && step % tcfg.checkpoint_interval == 0)
                save_checkpoint(model, vocab_hash, step, ckpt_path);
        }
        result.epochs_run = epoch + 1;

        const bool eval_now = tcfg.eval_interval > 0 && (epoch + 1) % tcfg.eval_interval == 0;
        if (eval_now) {
            if (tcfg.stop_train_hits1 > 0.0) {
                const double h1 = eval_hits1(model, vocab, g, split.train, split.train,
                                             tcfg.eval_beam_width);
                if (h1 >= tcfg.stop_train_hits1) {
                    result.stopped_early = true;
                    stop = true;
                }
            }
            if (!split.valid.empty() && (tcfg.patience > 0 || !best_path.empty())) {
                const double h1 =
                    eval_hits1(model, vocab, g, split.valid, split.train, tcfg.eval_beam_width);
                if (h1 > result.best_valid_hits1) {
                    result.best_valid_hits1 = h1;
                    evals_without_improvement = 0;
                    if (save) {
                        save_checkpoint(model, vocab_hash, step, best_path);
                        result.best_checkpoint = best_path;
                    }
                } else {
                    evals_without_improvement += 1;
                    if (tcfg.patience > 0 && evals_without_improvement >= tcfg.patience) {
                        result.stopped_early = true;
                        stop = true;
                    }
                }
            }
        }
    }

    result.steps = step;
    if (save) {
        save_checkpoint(model, vocab_hash, step, ckpt_path);
        result.final_checkpoint = ckpt_path;
    }
    if (out_model != nullptr) *out_model = std::move(model);
    return result;
}

// ---------------------------------------------------------------- baselines

BaselineModel::BaselineModel(ScoreVariant variant, std::size_t n_entities,
                             std::size_t n_relations, const BaselineConfig& cfg)
    : variant_(variant), dim_(cfg.dim) {
    if ((variant == ScoreVariant::rotate || variant == ScoreVariant::complex_tri) &&
        cfg.dim % 2 != 0)
        throw std::invalid_argument("BaselineModel: dim must be even for rotate/complex");
    Rng rng(seed_for(cfg.seed, "baseline-init"));
    const double bound = 6.0 / std::sqrt(double(cfg.dim));
    ent_ = Array::zeros({n_entities, cfg.dim}, true);
    for (std::size_t i = 0; i < ent_.numel(); ++i) ent_[i] = rng.uniform(-bound, bound);
    const std::size_t rel_dim = variant == ScoreVariant::rotate ? cfg.dim / 2 : cfg.dim;
    rel_ = Array::zeros({n_relations, rel_dim}, true);
    for (std::size_t i = 0; i < rel_.numel(); ++i)
        rel_[i] = variant == ScoreVariant::rotate ? rng.uniform(0.0, 6.283185307179586477)
                                                  : rng.uniform(-bound, bound);
}

namespace {

// Relation rows as [B, dim] vectors in the entity space; rotate expands its
// phase angles into unit complex numbers (cos | sin halves).
Array baseline_relation_rows(const Array& rel_table, const std::vector<int>& ids,
                             ScoreVariant variant, Tape& tape) {
    Array rows = tape.gather_rows(rel_table, ids);
    if (variant != ScoreVariant::rotate) return rows;
    return tape.concat_cols({tape.cos(rows), tape.sin(rows)});
}

}  // namespace

double BaselineModel::score(int head, int relation, int tail) const {
    Tape tape(false);
    Array h = tape.gather_rows(ent_, std::vector<int>{head});
    Array r = baseline_relation_rows(rel_, {relation}, variant_, tape);
    Array t = tape.gather_rows(ent_, std::vector<int>{tail});
    return global_scores_rows(h, r, t, variant_, tape).item();
}

std::vector<int> BaselineModel::rank_tails(int head, int relation,
                                           const std::vector<int>& candidates) const {
    Tape tape(false);
    const std::size_t n = candidates.size();
    Array h = tape.gather_rows(ent_, std::vector<int>(n, head));
    Array r = baseline_relation_rows(rel_, std::vector<int>(n, relation), variant_, tape);
    Array t = tape.gather_rows(ent_, candidates);
    Array s = global_scores_rows(h, r, t, variant_, tape);
    std::vector<int> order(candidates.begin(), candidates.end());
    std::vector<double> scores(s.data(), s.data() + s.numel());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return order[a] < order[b];
    });
    std::vector<int> ranked(n);
    for (std::size_t i = 0; i < n; ++i) ranked[i] = order[idx[i]];
    return ranked;
}

BaselineModel train_embedding_baseline(const KnowledgeGraph& g, const DatasetSplit& split,
                                       ScoreVariant variant, const BaselineConfig& cfg) {
    if (split.train.empty())
        throw std::invalid_argument("train_embedding_baseline: empty train split");
    BaselineModel model(variant, g.num_entities(), g.num_relations(), cfg);
    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.lr = cfg.lr;
    Optimizer opt({model.ent_, model.rel_}, ocfg);

    Rng rng(seed_for(cfg.seed, "baseline-train"));
    const std::size_t ne = g.num_entities();

    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            std::vector<int> heads, rels, tails, neg_heads, neg_tails;
            for (std::size_t i = 0; i < n; ++i) {
                const Triple& t = split.train[order[start + i]];
                heads.push_back(t.head);
                rels.push_back(t.relation);
                tails.push_back(t.tail);
                // Uniform corruption of head or tail; resample identity hits.
                const bool corrupt_head = rng.below(2) == 0;
                int corrupted = int(rng.below(ne));
                while (corrupted == (corrupt_head ? t.head : t.tail))
                    corrupted = int(rng.below(ne));
                neg_heads.push_back(corrupt_head ? corrupted : t.head);
                neg_tails.push_back(corrupt_head ? t.tail : corrupted);
            }
            Tape tape;
            Array h = tape.gather_rows(model.ent_, heads);
            Array r = baseline_relation_rows(model.rel_, rels, variant, tape);
            Array t = tape.gather_rows(model.ent_, tails);
            Array hn = tape.gather_rows(model.ent_, neg_heads);
            Array tn = tape.gather_rows(model.ent_, neg_tails);
            Array pos = global_scores_rows(h, r, t, variant, tape);
            Array neg = global_scores_rows(hn, r, tn, variant, tape);
            Array loss;
            if (variant == ScoreVariant::complex_tri) {
                // Logistic loss; pos/neg are negated trilinear scores, so
                // softplus(pos) pushes the true score up, softplus(-neg) down.
                loss = tape.add(tape.mean(tape.softplus(pos)),
                                tape.mean(tape.softplus(tape.neg(neg))));
            } else {
                Array margin = Array::full({pos.numel()}, cfg.margin);
                loss = tape.mean(tape.relu(tape.add(tape.sub(pos, neg), margin)));
            }
            model.ent_.zero_grad();
            model.rel_.zero_grad();
            tape.backward(loss);
            opt.step();
        }
    }
    return model;
}

}  // namespace kgc
