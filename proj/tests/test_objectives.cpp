#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "kgclm/kgdata.hpp"
#include "kgclm/model.hpp"
#include "kgclm/objectives.hpp"
#include "kgclm/rand.hpp"
#include "kgclm/vocab.hpp"

using namespace kgc;

namespace {

double softplus_ref(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

Array vec(std::vector<double> v, bool rg = false) {
    const std::size_t n = v.size();
    return Array::from_values({n}, std::move(v), rg);
}

struct ModelFixture {
    KnowledgeGraph g;
    Vocabulary vocab;
    ModelConfig cfg;
    Model model;
    std::vector<SerializedTriple> batch;
    std::vector<int> pairing;

    ModelFixture(std::size_t n_layers, std::size_t d_model, std::size_t batch_size,
                 std::uint64_t seed = 3) {
        g.lang = "xx";
        for (const char* n : {"ab", "ba", "ca", "bc", "ac", "cb"}) g.intern_entity(n, "xx");
        g.intern_relation("r0");
        g.intern_relation("r1");
        vocab = build_vocab({g}, TokenizerMode::chars);
        cfg.n_layers = n_layers;
        cfg.n_heads = 2;
        cfg.d_model = d_model;
        cfg.d_ff = d_model * 2;
        cfg.vocab_size = std::size_t(vocab.size());
        model = Model(cfg, seed);
        const char* heads[] = {"ab", "ba", "ca", "bc"};
        const char* tails[] = {"bc", "ac", "cb", "ab"};
        for (std::size_t i = 0; i < batch_size; ++i)
            batch.push_back(serialize_triple(heads[i % 4], i % 2 ? "r0" : "r1", tails[i % 4],
                                             vocab));
        for (std::size_t i = 0; i < batch_size; ++i)
            pairing.push_back(int((i + 1) % batch_size));
    }
};

}  // namespace

TEST_CASE("generation_loss: uniform model gives ln V") {
    ModelFixture f(1, 8, 2);
    for (auto& p : f.model.parameters())
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    Tape t;
    EncodedBatch enc = f.model.forward(f.batch, t);
    Array l = generation_loss(f.model, enc, f.batch, t);
    CHECK(l.item() == doctest::Approx(std::log(double(f.vocab.size()))).epsilon(1e-12));
}

TEST_CASE("generation_loss: certain model gives ~0") {
    // Zero trunk except a final-LN bias along e0, with an untied output head
    // that pushes [E]; an empty-string tail makes [E] the only target.
    KnowledgeGraph g;
    g.lang = "xx";
    g.intern_entity("ab", "xx");
    g.intern_entity("", "xx");
    g.intern_relation("r");
    Vocabulary vocab = build_vocab({g}, TokenizerMode::chars);
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.vocab_size = std::size_t(vocab.size());
    cfg.tie_output = false;
    Model model(cfg, 1);
    for (auto& p : model.parameters())
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    model.weights().lnf_b[0] = 1.0;
    model.weights().out_proj.at(std::size_t(Vocabulary::kEnd), 0) = 60.0;

    std::vector<SerializedTriple> batch{serialize_triple("ab", "r", "", vocab)};
    Tape t;
    EncodedBatch enc = model.forward(batch, t);
    Array l = generation_loss(model, enc, batch, t);
    CHECK(l.item() < 1e-12);
    CHECK(l.item() >= 0.0);
}

TEST_CASE("generation_loss matches a naive per-position recount") {
    ModelFixture f(2, 8, 3);
    Tape t;
    EncodedBatch enc = f.model.forward(f.batch, t);
    Array l = generation_loss(f.model, enc, f.batch, t);

    double naive = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < f.batch.size(); ++b) {
        const auto& s = f.batch[b];
        for (std::size_t p = s.query_len; p < s.ids.size(); ++p) {
            Array logits = f.model.next_token_logits(enc, b, p, t);
            double mx = logits[0];
            for (std::size_t j = 1; j < logits.numel(); ++j) mx = std::max(mx, logits[j]);
            double z = 0.0;
            for (std::size_t j = 0; j < logits.numel(); ++j) z += std::exp(logits[j] - mx);
            naive += -(logits[std::size_t(s.ids[p])] - mx - std::log(z));
            ++count;
        }
    }
    naive /= double(count);
    CHECK(l.item() == doctest::Approx(naive).epsilon(1e-9));

    SerializedTriple query_only = serialize_query("ab", "r0", f.vocab);
    Tape t2;
    EncodedBatch enc2 = f.model.forward({query_only}, t2);
    CHECK_THROWS(generation_loss(f.model, enc2, {query_only}, t2));
}

TEST_CASE("global_score transe variants") {
    Tape t;
    CHECK(global_score(vec({1, 2}), vec({0, 1}), vec({1, 3}), ScoreVariant::transe_l1, t)
              .item() == 0.0);
    CHECK(global_score(vec({1, 2}), vec({0, 1}), vec({1, 1}), ScoreVariant::transe_l1, t)
              .item() == doctest::Approx(2.0));
    CHECK(global_score(vec({1, 2}), vec({0, 1}), vec({1, 1}), ScoreVariant::transe_l2, t)
              .item() == doctest::Approx(2.0));
    CHECK(global_score(vec({3, 0}), vec({0, 4}), vec({0, 0}), ScoreVariant::transe_l2, t)
              .item() == doctest::Approx(5.0));
}

TEST_CASE("global_score transe is zero at exact translation (property)") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> h(6), r(6), s(6);
        for (int i = 0; i < 6; ++i) {
            h[std::size_t(i)] = rng.uniform(-2, 2);
            r[std::size_t(i)] = rng.uniform(-2, 2);
            s[std::size_t(i)] = h[std::size_t(i)] + r[std::size_t(i)];
        }
        Tape t;
        CHECK(global_score(vec(h), vec(r), vec(s), ScoreVariant::transe_l1, t).item() == 0.0);
        CHECK(global_score(vec(h), vec(r), vec(s), ScoreVariant::transe_l2, t).item() == 0.0);
    }
}

TEST_CASE("global_score rotate: identity rotation reduces to L1") {
    Tape t;
    // Real-part-only relation entries rotate by identity.
    Array h = vec({0.5, -1.0, 0.25, 2.0});
    Array r = vec({2.0, 3.0, 0.0, 0.0});
    Array tt = vec({1.0, 0.5, -0.5, 0.5});
    const double expect = std::fabs(0.5 - 1.0) + std::fabs(-1.0 - 0.5) +
                          std::fabs(0.25 + 0.5) + std::fabs(2.0 - 0.5);
    CHECK(global_score(h, r, tt, ScoreVariant::rotate, t).item() ==
          doctest::Approx(expect).epsilon(1e-15));

    CHECK_THROWS(global_score(vec({1, 2, 3}), vec({1, 2, 3}), vec({1, 2, 3}),
                              ScoreVariant::rotate, t));
}

TEST_CASE("global_score complex matches a hand trilinear computation") {
    Tape t;
    const double hr = 0.5, hi = -0.3, rr = 0.2, ri = 0.7, tr = -0.4, ti = 0.1;
    Array h = vec({hr, hi});
    Array r = vec({rr, ri});
    Array tt = vec({tr, ti});
    const double raw = hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr;
    CHECK(global_score(h, r, tt, ScoreVariant::complex_tri, t).item() ==
          doctest::Approx(-raw).epsilon(1e-12));
    CHECK_THROWS(global_score(vec({1, 2, 3}), vec({1, 2, 3}), vec({1, 2, 3}),
                              ScoreVariant::complex_tri, t));
}

TEST_CASE("global_scores_rows agrees with per-triple global_score") {
    Rng rng(9);
    for (ScoreVariant v : {ScoreVariant::transe_l1, ScoreVariant::transe_l2,
                           ScoreVariant::rotate, ScoreVariant::complex_tri}) {
        std::vector<std::vector<double>> hs, rs, ts;
        for (int b = 0; b < 3; ++b) {
            std::vector<double> h(4), r(4), s(4);
            for (int i = 0; i < 4; ++i) {
                h[std::size_t(i)] = rng.uniform(-1, 1);
                r[std::size_t(i)] = rng.uniform(-1, 1);
                s[std::size_t(i)] = rng.uniform(-1, 1);
            }
            hs.push_back(h);
            rs.push_back(r);
            ts.push_back(s);
        }
        Tape t;
        Array H = t.stack_rows({vec(hs[0]), vec(hs[1]), vec(hs[2])});
        Array R = t.stack_rows({vec(rs[0]), vec(rs[1]), vec(rs[2])});
        Array T = t.stack_rows({vec(ts[0]), vec(ts[1]), vec(ts[2])});
        Array rows = global_scores_rows(H, R, T, v, t);
        for (int b = 0; b < 3; ++b) {
            Tape t2;
            CHECK(rows[std::size_t(b)] ==
                  doctest::Approx(global_score(vec(hs[std::size_t(b)]), vec(rs[std::size_t(b)]),
                                               vec(ts[std::size_t(b)]), v, t2)
                                      .item())
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("global_loss: zeros, gamma shift, hand mean") {
    Tape t;
    RoleStates zero;
    zero.h = Array::zeros({3, 4});
    zero.r = Array::zeros({3, 4});
    zero.t = Array::zeros({3, 4});
    LossWeights w;
    CHECK(global_loss(zero, w, t).item() == 0.0);

    w.gamma = 0.75;
    CHECK(global_loss(zero, w, t).item() == doctest::Approx(0.75));

    // Hand-built batch of 3: scores 0, 2, 4 -> mean 2.
    Tape t2;
    RoleStates roles;
    roles.h = Array::from_values({3, 2}, {1, 2, 1, 2, 1, 2});
    roles.r = Array::from_values({3, 2}, {0, 1, 0, 1, 0, 1});
    roles.t = Array::from_values({3, 2}, {1, 3, 1, 1, 3, 1});
    LossWeights w2;
    CHECK(global_loss(roles, w2, t2).item() == doctest::Approx((0.0 + 2.0 + 4.0) / 3.0));
}

TEST_CASE("global_loss margin form uses in-batch corrupted tails") {
    Tape t;
    RoleStates roles;
    roles.h = Array::from_values({2, 2}, {1, 1, 0, 0});
    roles.r = Array::from_values({2, 2}, {0, 0, 0, 0});
    roles.t = Array::from_values({2, 2}, {1, 1, 1, 1});
    LossWeights w;
    w.gamma = 0.5;
    w.gamma_margin = true;
    std::vector<int> pairing{1, 0};
    // pos: ex0 0, ex1 2; corrupted tails swap but equal (1,1): neg 0 and 2.
    // relu(pos - neg + 0.5) = 0.5 each -> mean 0.5.
    CHECK(global_loss(roles, w, t, &pairing).item() == doctest::Approx(0.5));
    CHECK_THROWS(global_loss(roles, w, t, nullptr));
}

TEST_CASE("jsd estimate: zero discriminator hits -2 ln 2") {
    Tape t;
    Array H_q = Array::from_values({3, 4}, {1, 2, 3, 4, -1, 0, 2, 1, 0.5, 0.5, 0.5, 0.5});
    Array h_T = Array::zeros({4});
    Array est = jsd_mi_estimate(H_q, h_T, H_q, JsdPositiveForm::sp_neg_t, t);
    CHECK(std::fabs(est.item() - (-2.0 * std::log(2.0))) <= 1e-9);
}

TEST_CASE("jsd estimate: orthogonal tail with identical negatives") {
    Tape t;
    // Query states live in dims 1..3, the tail state in dim 0.
    Array H_q = Array::from_values({2, 4}, {0, 1, 2, 3, 0, -2, 1, 0.5});
    Array h_T = Array::from_values({4}, {5, 0, 0, 0});
    Array est = jsd_mi_estimate(H_q, h_T, H_q, JsdPositiveForm::sp_neg_t, t);
    CHECK(std::fabs(est.item() - (-2.0 * std::log(2.0))) <= 1e-9);
}

TEST_CASE("jsd estimate is invariant to query-position order") {
    Rng rng(13);
    std::vector<double> rows(5 * 8);
    for (auto& v : rows) v = rng.uniform(-1, 1);
    std::vector<double> tail(8);
    for (auto& v : tail) v = rng.uniform(-1, 1);

    Tape t;
    Array H = Array::from_values({5, 8}, rows);
    std::vector<double> perm_rows;
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    for (std::size_t i : perm)
        perm_rows.insert(perm_rows.end(), rows.begin() + long(i * 8),
                         rows.begin() + long((i + 1) * 8));
    Array Hp = Array::from_values({5, 8}, perm_rows);
    Array ht = vec(tail);
    const double a = jsd_mi_estimate(H, ht, H, JsdPositiveForm::sp_neg_t, t).item();
    const double b = jsd_mi_estimate(Hp, ht, Hp, JsdPositiveForm::sp_neg_t, t).item();
    CHECK(std::fabs(a - b) <= 1e-12);
}

TEST_CASE("jsd estimate separates correlated from independent pairs") {
    Rng rng(77);
    const std::size_t d = 16, m = 6;
    double corr_sum = 0.0, indep_sum = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        std::vector<double> q(m * d), q_neg(m * d), noise(d), indep_tail(d);
        for (auto& v : q) v = rng.normal();
        for (auto& v : q_neg) v = rng.normal();
        for (auto& v : noise) v = 0.1 * rng.normal();
        for (auto& v : indep_tail) v = rng.normal();
        Tape t;
        Array H = Array::from_values({m, d}, q);
        Array Hn = Array::from_values({m, d}, q_neg);
        Array mean_q = t.mean_rows(H);
        std::vector<double> tail(d);
        for (std::size_t i = 0; i < d; ++i) tail[i] = mean_q[i] + noise[i];
        corr_sum += jsd_mi_estimate(H, vec(tail), Hn, JsdPositiveForm::sp_neg_t, t).item();
        indep_sum +=
            jsd_mi_estimate(H, vec(indep_tail), Hn, JsdPositiveForm::sp_neg_t, t).item();
    }
    CHECK(corr_sum / 100.0 >= indep_sum / 100.0 + 0.1);
}

TEST_CASE("local_loss equals the negated per-example estimate") {
    Rng rng(31);
    const std::size_t B = 4, d = 8;
    std::vector<std::vector<double>> qs(B, std::vector<double>(3 * d));
    std::vector<std::vector<double>> tails(B, std::vector<double>(d));
    for (auto& q : qs)
        for (auto& v : q) v = rng.uniform(-1, 1);
    for (auto& tl : tails)
        for (auto& v : tl) v = rng.uniform(-1, 1);
    std::vector<int> pairing{2, 3, 1, 0};

    Tape t;
    std::vector<Array> means;
    for (auto& q : qs) means.push_back(t.mean_rows(Array::from_values({3, d}, q)));
    Array U = t.stack_rows(means);
    std::vector<Array> tvs;
    for (auto& tl : tails) tvs.push_back(vec(tl));
    Array T = t.stack_rows(tvs);

    LocalLossResult ll = local_loss(U, T, pairing, JsdPositiveForm::sp_neg_t, t);
    CHECK_FALSE(ll.skipped);

    double est_sum = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        Tape t2;
        Array Hq = Array::from_values({3, d}, qs[b]);
        Array Hn = Array::from_values({3, d}, qs[std::size_t(pairing[b])]);
        est_sum += jsd_mi_estimate(Hq, vec(tails[b]), Hn, JsdPositiveForm::sp_neg_t, t2).item();
    }
    CHECK(ll.value.item() == doctest::Approx(-est_sum / double(B)).epsilon(1e-12));

    // Naive loop re-implementation oracle.
    double naive = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        auto mean_of = [&](const std::vector<double>& q) {
            std::vector<double> u(d, 0.0);
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < d; ++j) u[j] += q[i * d + j] / 3.0;
            return u;
        };
        auto dot_scaled = [&](const std::vector<double>& u, const std::vector<double>& w) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += u[j] * w[j];
            return acc / std::sqrt(double(d));
        };
        const double t_pos = dot_scaled(mean_of(qs[b]), tails[b]);
        const double t_neg = dot_scaled(mean_of(qs[std::size_t(pairing[b])]), tails[b]);
        naive += (softplus_ref(t_neg) + softplus_ref(-t_pos)) / double(B);
    }
    CHECK(ll.value.item() == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("local_loss derangement and singleton contracts") {
    Tape t;
    Array U = Array::from_values({2, 2}, {1, 0, 0, 1});
    Array T = Array::from_values({2, 2}, {1, 1, 1, 1});
    std::vector<int> fixed_point{0, 1};
    CHECK_THROWS(local_loss(U, T, fixed_point, JsdPositiveForm::sp_neg_t, t));

    Array U1 = Array::from_values({1, 2}, {1, 0});
    Array T1 = Array::from_values({1, 2}, {1, 1});
    LocalLossResult r = local_loss(U1, T1, {}, JsdPositiveForm::sp_neg_t, t);
    CHECK(r.skipped);
    CHECK(r.value.item() == 0.0);
}

TEST_CASE("alternative positive form flips the positive term") {
    Tape t;
    Array H_q = Array::from_values({1, 2}, {1.0, 2.0});
    Array h_T = vec({0.5, -0.25});
    Array H_n = Array::from_values({1, 2}, {-1.0, 0.5});
    const double t_pos = (1.0 * 0.5 + 2.0 * -0.25) / std::sqrt(2.0);
    const double t_neg = (-1.0 * 0.5 + 0.5 * -0.25) / std::sqrt(2.0);
    const double std_form =
        jsd_mi_estimate(H_q, h_T, H_n, JsdPositiveForm::sp_neg_t, t).item();
    const double alt_form = jsd_mi_estimate(H_q, h_T, H_n, JsdPositiveForm::sp_t, t).item();
    CHECK(std_form ==
          doctest::Approx(-softplus_ref(-t_pos) - softplus_ref(t_neg)).epsilon(1e-12));
    CHECK(alt_form ==
          doctest::Approx(-softplus_ref(t_pos) - softplus_ref(t_neg)).epsilon(1e-12));
}

TEST_CASE("total_loss composition and ablation identity") {
    Tape t;
    LossWeights w;  // defaults alpha 0.001, beta 0.005
    CHECK(w.alpha == 0.001);
    CHECK(w.beta == 0.005);
    LocalLossResult le;
    le.value = Array::scalar(3.0);
    TotalLoss tl = total_loss(Array::scalar(1.0), Array::scalar(2.0), le, w, t);
    CHECK(tl.total.item() == doctest::Approx(1.017).epsilon(1e-12));
    CHECK(std::fabs(tl.report.total - (tl.report.l_g + w.alpha * tl.report.l_p +
                                       w.beta * tl.report.l_e)) <= 1e-9);

    LossWeights off;
    off.alpha = 0.0;
    off.beta = 0.0;
    Array l_g = Array::scalar(0.731);
    TotalLoss gen_only = total_loss(l_g, Array::scalar(5.0), le, off, t);
    CHECK(gen_only.total.item() == 0.731);
    CHECK(gen_only.total.same_node(l_g));  // bit-identical by construction

    LocalLossResult bad;
    bad.value = Array::scalar(std::nan(""));
    CHECK_THROWS_WITH_AS(total_loss(l_g, Array::scalar(0.0), bad, w, t),
                         doctest::Contains("l_e"), std::runtime_error);
}

TEST_CASE("loss gradients pass finite differences on a micro model") {
    ModelFixture f(1, 8, 2, 11);
    auto params = f.model.parameters();
    test::GradCheckOptions opts;
    opts.stride = 3;  // subsample; the acceptance suite runs the full sweep

    auto fd_for = [&](const std::function<Array(Tape&)>& build) {
        auto res = test::check_gradients(build, params, opts);
        CHECK(res.max_rel_err < 1e-3);
    };

    fd_for([&](Tape& t) {
        EncodedBatch enc = f.model.forward(f.batch, t);
        return generation_loss(f.model, enc, f.batch, t);
    });
    fd_for([&](Tape& t) {
        EncodedBatch enc = f.model.forward(f.batch, t);
        RoleStates roles = extract_role_states(enc, t);
        LossWeights w;
        return global_loss(roles, w, t);
    });
    fd_for([&](Tape& t) {
        EncodedBatch enc = f.model.forward(f.batch, t);
        RoleStates roles = extract_role_states(enc, t);
        Array u = query_mean_states(enc, f.batch, t);
        return local_loss(u, roles.t, f.pairing, JsdPositiveForm::sp_neg_t, t).value;
    });
    fd_for([&](Tape& t) {
        EncodedBatch enc = f.model.forward(f.batch, t);
        Array l_g = generation_loss(f.model, enc, f.batch, t);
        RoleStates roles = extract_role_states(enc, t);
        LossWeights w;
        Array l_p = global_loss(roles, w, t);
        Array u = query_mean_states(enc, f.batch, t);
        LocalLossResult l_e = local_loss(u, roles.t, f.pairing, w.jsd_pos_form, t);
        return total_loss(l_g, l_p, l_e, w, t).total;
    });
}
