#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "qdm/classify.hpp"
#include "qdm/errors.hpp"
#include "qdm/rng.hpp"

using namespace qdm;

namespace {

Map2D const_map(std::size_t rows, std::size_t cols, double v) {
    return Map2D(rows, cols, 1.0, v);
}

LabeledImageSet one_px_set(const std::vector<int>& labels) {
    LabeledImageSet s;
    s.scenario = "synthetic";
    for (std::size_t j = 0; j < labels.size(); ++j) {
        s.images.push_back(const_map(1, 1, static_cast<double>(j)));
        s.labels.push_back(labels[j]);
        s.timestamps.push_back(static_cast<double>(j));
    }
    return s;
}

Map2D random_map(std::size_t rows, std::size_t cols, RngStream& rng, double scale = 1.0) {
    Map2D m(rows, cols, 1.0);
    for (double& v : m.data) v = scale * rng.next_gaussian();
    return m;
}

double frob_inner(const Map2D& a, const Map2D& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double frob_norm(const Map2D& a) { return std::sqrt(frob_inner(a, a)); }

}  // namespace

TEST_CASE("preprocess: nearest idle wins, earlier on ties, then binning") {
    LabeledImageSet actives, idles;
    actives.scenario = idles.scenario = "synthetic";
    idles.images = {const_map(4, 6, 3.0), const_map(4, 6, 7.0)};
    idles.labels = {0, 0};
    idles.timestamps = {0.0, 10.0};

    actives.images = {const_map(4, 6, 3.0), const_map(4, 6, 10.0), const_map(4, 6, 10.0)};
    actives.labels = {1, 5, 5};
    actives.timestamps = {1.0, 9.4, 5.0};  // third is equidistant: earlier idle wins

    auto out = preprocess(actives, idles, 1);
    REQUIRE(out.size() == 3);
    CHECK(out.labels == actives.labels);
    for (double v : out.images[0].data) CHECK(v == 0.0);         // equals its idle
    for (double v : out.images[1].data) CHECK(v == 3.0);         // 10 - 7
    for (double v : out.images[2].data) CHECK(v == 7.0);         // 10 - 3 (earlier)

    auto binned = preprocess(actives, idles, 2);
    CHECK(binned.images[0].rows == 2);
    CHECK(binned.images[0].cols == 3);

    LabeledImageSet tiny = idles;
    tiny.images[0] = const_map(3, 3, 0.0);
    CHECK_THROWS_AS(preprocess(actives, tiny, 1), UsageError);

    LabeledImageSet no_idles;
    no_idles.scenario = "synthetic";
    CHECK_THROWS_AS(preprocess(actives, no_idles, 1), UsageError);
}

TEST_CASE("preprocess: paper-analog dimensions bin 600x606 to 300x303") {
    LabeledImageSet actives, idles;
    actives.images = {const_map(600, 606, 5.0)};
    actives.labels = {1};
    actives.timestamps = {1.0};
    idles.images = {const_map(600, 606, 3.0)};
    idles.labels = {0};
    idles.timestamps = {0.0};
    auto out = preprocess(actives, idles, 2);
    CHECK(out.images[0].rows == 300);
    CHECK(out.images[0].cols == 303);
    for (double v : out.images[0].data) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("split: stratified counts match the frozen fractions") {
    std::vector<int> labels;
    for (int s : {0, 1, 5, 10, 50, 100, 200})
        for (int j = 0; j < 40; ++j) labels.push_back(s);
    auto set = one_px_set(labels);

    SplitConfig cfg;
    cfg.train_fraction = 0.75;
    cfg.seed = 3;
    auto sp = split(set, cfg);
    std::map<int, int> train_n, test_n;
    for (int lab : sp.train.labels) ++train_n[lab];
    for (int lab : sp.test.labels) ++test_n[lab];
    for (int s : {0, 1, 5, 10, 50, 100, 200}) {
        CHECK(train_n[s] == 30);
        CHECK(test_n[s] == 10);
    }

    // intact-analog counts: floor(0.64 * 32) = 20 train, 12 test
    std::vector<int> labels2;
    for (int s : {0, 1, 5})
        for (int j = 0; j < 32; ++j) labels2.push_back(s);
    SplitConfig cfg2;
    cfg2.train_fraction = 0.64;
    cfg2.seed = 9;
    auto sp2 = split(one_px_set(labels2), cfg2);
    std::map<int, int> n2;
    for (int lab : sp2.train.labels) ++n2[lab];
    for (int s : {0, 1, 5}) CHECK(n2[s] == 20);
    CHECK(sp2.test.size() == 3 * 12);

    // disjoint and exhaustive: the 1-px images carry unique ids
    std::set<double> seen;
    for (const auto& img : sp.train.images) seen.insert(img.data[0]);
    for (const auto& img : sp.test.images) seen.insert(img.data[0]);
    CHECK(seen.size() == set.size());

    auto sp_again = split(set, cfg);
    CHECK(sp_again.train.labels == sp.train.labels);
    for (std::size_t j = 0; j < sp.train.size(); ++j)
        CHECK(sp_again.train.images[j].data == sp.train.images[j].data);

    auto one = one_px_set({0, 0, 7});
    CHECK_THROWS_AS(split(one, cfg), UsageError);  // class 7 has a single image

    SplitConfig bad;
    bad.train_fraction = 1.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("pca_fit: recovers a planted component") {
    RngStream rng(501);
    Map2D w = random_map(16, 16, rng);
    double n = frob_norm(w);
    for (double& v : w.data) v /= n;

    LabeledImageSet set;
    for (int j = 0; j < 12; ++j) {
        Map2D img(16, 16, 1.0);
        double c = 1.0 + j;
        for (std::size_t i = 0; i < img.size(); ++i)
            img.data[i] = c * w.data[i] + 1e-6 * rng.next_gaussian();
        set.images.push_back(img);
        set.labels.push_back(j);
        set.timestamps.push_back(j);
    }
    auto basis = pca_fit(set, 3);
    CHECK_NOTHROW(basis.validate());
    CHECK(std::abs(frob_inner(basis.components[0], w)) > 0.99);
    CHECK(basis.explained[0] > 0.999);

    // sign convention: the largest-magnitude element is positive
    for (const auto& comp : basis.components) {
        double best = 0, best_abs = 0;
        for (double v : comp.data)
            if (std::abs(v) > best_abs) {
                best_abs = std::abs(v);
                best = v;
            }
        CHECK(best > 0);
    }
}

TEST_CASE("pca_fit: two images give their difference as PC1") {
    RngStream rng(502);
    LabeledImageSet set;
    set.images = {random_map(8, 8, rng), random_map(8, 8, rng)};
    set.labels = {0, 1};
    set.timestamps = {0, 1};
    auto basis = pca_fit(set, 1);
    Map2D diff(8, 8, 1.0);
    for (std::size_t i = 0; i < diff.size(); ++i)
        diff.data[i] = set.images[0].data[i] - set.images[1].data[i];
    double nd = frob_norm(diff);
    CHECK(std::abs(frob_inner(basis.components[0], diff)) / nd == doctest::Approx(1.0));

    CHECK_THROWS_AS(pca_fit(set, 5), UsageError);  // more components than images
}

TEST_CASE("pca_fit: orthonormal basis, ordered variance, reconstruction") {
    RngStream rng(503);
    LabeledImageSet set;
    for (int j = 0; j < 8; ++j) {
        set.images.push_back(random_map(12, 12, rng));
        set.labels.push_back(j);
        set.timestamps.push_back(j);
    }
    auto basis = pca_fit(set, 7);
    CHECK_NOTHROW(basis.validate());
    for (std::size_t a = 0; a < basis.k(); ++a)
        for (std::size_t b = 0; b < basis.k(); ++b) {
            double want = a == b ? 1.0 : 0.0;
            CHECK(std::abs(frob_inner(basis.components[a], basis.components[b]) - want) < 1e-10);
        }
    double sum = 0;
    for (std::size_t i = 0; i < basis.explained.size(); ++i) {
        if (i) CHECK(basis.explained[i] <= basis.explained[i - 1] + 1e-15);
        sum += basis.explained[i];
    }
    CHECK(sum <= 1.0 + 1e-12);

    // reconstruction error shrinks with k; with k = n-1 it vanishes
    auto recon_err = [&](std::size_t k) {
        auto b = pca_fit(set, k);
        double err2 = 0, sig2 = 0;
        for (const auto& img : set.images) {
            Map2D res(12, 12, 1.0);
            for (std::size_t i = 0; i < res.size(); ++i)
                res.data[i] = img.data[i] - b.mean.data[i];
            sig2 += frob_inner(res, res);
            for (const auto& comp : b.components) {
                double c = frob_inner(res, comp);
                for (std::size_t i = 0; i < res.size(); ++i) res.data[i] -= c * comp.data[i];
            }
            err2 += frob_inner(res, res);
        }
        return std::sqrt(err2 / sig2);
    };
    double prev = 2.0;
    for (std::size_t k = 1; k <= 7; ++k) {
        double e = recon_err(k);
        CHECK(e <= prev + 1e-12);
        prev = e;
    }
    CHECK(recon_err(7) < 1e-8);

    // image order only affects component signs
    LabeledImageSet rev = set;
    std::reverse(rev.images.begin(), rev.images.end());
    std::reverse(rev.labels.begin(), rev.labels.end());
    std::reverse(rev.timestamps.begin(), rev.timestamps.end());
    auto basis2 = pca_fit(rev, 7);
    for (std::size_t i = 0; i < basis.k(); ++i)
        CHECK(std::abs(std::abs(frob_inner(basis.components[i], basis2.components[i])) - 1.0) <
              1e-6);
}

TEST_CASE("pca_score: centered normalized projections") {
    RngStream rng(504);
    LabeledImageSet set;
    for (int j = 0; j < 6; ++j) {
        set.images.push_back(random_map(10, 10, rng));
        set.labels.push_back(j);
        set.timestamps.push_back(j);
    }
    auto basis = pca_fit(set, 4);
    const double mn = 100.0;

    auto s0 = pca_score(basis, basis.mean);
    for (double v : s0) CHECK(std::abs(v) < 1e-15);

    Map2D img = basis.mean;
    const double c = 3.7;
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] += c * basis.components[1].data[i];
    auto s1 = pca_score(basis, img);
    CHECK(s1[1] == doctest::Approx(c / mn));
    CHECK(std::abs(s1[0]) < 1e-12);
    CHECK(std::abs(s1[2]) < 1e-12);

    // linearity in the centered image
    RngStream rng2(505);
    Map2D u = random_map(10, 10, rng2), v = random_map(10, 10, rng2);
    const double a = 0.8, b = -2.5;
    Map2D combo = basis.mean;
    Map2D mu = basis.mean, mv = basis.mean;
    for (std::size_t i = 0; i < combo.size(); ++i) {
        combo.data[i] += a * u.data[i] + b * v.data[i];
        mu.data[i] += u.data[i];
        mv.data[i] += v.data[i];
    }
    auto sc = pca_score(basis, combo);
    auto su = pca_score(basis, mu);
    auto sv = pca_score(basis, mv);
    for (std::size_t i = 0; i < sc.size(); ++i)
        CHECK(sc[i] == doctest::Approx(a * su[i] + b * sv[i]).epsilon(1e-9));

    CHECK_THROWS_AS(pca_score(basis, const_map(4, 4, 0.0)), UsageError);
}

TEST_CASE("svm_train: symmetric separable problem puts the boundary at zero") {
    ScoreMatrix sm;
    for (int j = 0; j < 10; ++j) {
        sm.scores.push_back({-1.0});
        sm.labels.push_back(0);
        sm.scores.push_back({1.0});
        sm.labels.push_back(1);
    }
    auto model = svm_train(sm, 6.0);
    REQUIRE(model.machines.size() == 1);
    const auto& m = model.machines[0];
    CHECK(m.class_lo == 0);
    CHECK(m.class_hi == 1);
    REQUIRE(std::abs(m.w[0]) > 0);
    CHECK(std::abs(m.b) / std::abs(m.w[0]) < 1e-3);
    for (std::size_t j = 0; j < sm.scores.size(); ++j)
        CHECK(svm_predict(model, sm.scores[j]) == sm.labels[j]);

    // duplicating every point leaves the separable optimum unchanged
    ScoreMatrix doubled = sm;
    doubled.scores.insert(doubled.scores.end(), sm.scores.begin(), sm.scores.end());
    doubled.labels.insert(doubled.labels.end(), sm.labels.begin(), sm.labels.end());
    auto model2 = svm_train(doubled, 6.0);
    CHECK(model2.machines[0].w[0] == doctest::Approx(m.w[0]).epsilon(1e-4));
    CHECK(model2.machines[0].b == doctest::Approx(m.b).epsilon(1e-4).scale(1.0));

    ScoreMatrix single;
    single.scores = {{1.0}, {2.0}};
    single.labels = {3, 3};
    CHECK_THROWS_AS(svm_train(single, 6.0), UsageError);
}

TEST_CASE("svm dual solution: KKT-clean within tolerance and locally optimal") {
    // overlapping 2-D clusters so both interior and bound support vectors show up
    RngStream rng(506);
    std::vector<std::vector<double>> pts;
    std::vector<int> sgn;
    for (int j = 0; j < 20; ++j) {
        pts.push_back({-1.0 + 0.8 * rng.next_gaussian(), 0.8 * rng.next_gaussian()});
        sgn.push_back(1);
        pts.push_back({1.0 + 0.8 * rng.next_gaussian(), 0.8 * rng.next_gaussian()});
        sgn.push_back(-1);
    }
    const double C = 6.0, tol = 1e-4;
    auto sol = svm_solve_binary(pts, sgn, C, tol);
    const std::size_t n = pts.size();
    REQUIRE(sol.alpha.size() == n);

    auto kern = [&](std::size_t a, std::size_t b) {
        return pts[a][0] * pts[b][0] + pts[a][1] * pts[b][1];
    };

    // box constraints and the dual equality constraint
    double sum_ay = 0;
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(sol.alpha[i] >= -1e-12);
        CHECK(sol.alpha[i] <= C + 1e-12);
        sum_ay += sol.alpha[i] * sgn[i];
    }
    CHECK(std::abs(sum_ay) < 1e-9 * C * static_cast<double>(n));

    // KKT bands at the solver's tolerance
    std::vector<double> f(n, sol.b);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) f[i] += sol.alpha[j] * sgn[j] * kern(j, i);
    for (std::size_t i = 0; i < n; ++i) {
        double yf = sgn[i] * f[i];
        if (sol.alpha[i] < 1e-8 * C)
            CHECK(yf >= 1.0 - 1.01 * tol);
        else if (sol.alpha[i] > C * (1 - 1e-8))
            CHECK(yf <= 1.0 + 1.01 * tol);
        else
            CHECK(std::abs(yf - 1.0) <= 1.01 * tol);
    }

    // local optimality of the dual objective: a million random feasible
    // two-coordinate moves, none may improve it beyond 1e-3 relative
    std::vector<double> g(n, 0.0);  // (Q alpha)_i with Q_ij = y_i y_j K_ij
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i] += sgn[i] * sgn[j] * kern(i, j) * sol.alpha[j];
    double obj = 0;
    for (std::size_t i = 0; i < n; ++i) obj += sol.alpha[i] - 0.5 * sol.alpha[i] * g[i];

    RngStream pert(507);
    double best_gain = 0;
    for (int t = 0; t < 1000000; ++t) {
        std::size_t i = pert.next_u64() % n;
        std::size_t j = pert.next_u64() % (n - 1);
        if (j >= i) ++j;
        double s = static_cast<double>(sgn[i] * sgn[j]);
        // alpha_i += d, alpha_j -= s*d keeps sum(alpha*y) fixed; both must
        // stay inside [0, C]
        double lo = -sol.alpha[i], hi = C - sol.alpha[i];
        if (s > 0) {
            lo = std::max(lo, sol.alpha[j] - C);
            hi = std::min(hi, sol.alpha[j]);
        } else {
            lo = std::max(lo, -sol.alpha[j]);
            hi = std::min(hi, C - sol.alpha[j]);
        }
        if (hi <= lo) continue;
        double d = lo + (hi - lo) * pert.next_uniform();
        double dj = -s * d;
        double gain = (d + dj) - (d * g[i] + dj * g[j]) -
                      0.5 * (d * d * kern(i, i) + 2.0 * d * dj * s * kern(i, j) +
                             dj * dj * kern(j, j));
        best_gain = std::max(best_gain, gain);
    }
    CHECK(best_gain <= 1e-3 * std::max(std::abs(obj), 1e-9));
}

TEST_CASE("svm_predict: vote ties resolve toward the smaller count") {
    SVMModel model;
    model.classes = {0, 5, 10};
    model.dim = 1;
    model.C = 6.0;
    PairwiseSVM ab{0, 5, {0.0}, -1.0};   // votes 5
    PairwiseSVM bc{5, 10, {0.0}, -1.0};  // votes 10
    PairwiseSVM ac{0, 10, {0.0}, 1.0};   // votes 0
    model.machines = {ab, bc, ac};
    CHECK(svm_predict(model, {0.0}) == 0);

    // one clear winner
    model.machines[1].b = 1.0;  // (5,10) now votes 5
    CHECK(svm_predict(model, {0.0}) == 5);

    CHECK_THROWS_AS(svm_predict(model, {0.0, 1.0}), UsageError);
}

TEST_CASE("svm: predictions are invariant under a constant score shift") {
    RngStream rng(507);
    ScoreMatrix sm;
    for (int j = 0; j < 15; ++j) {
        sm.scores.push_back({-2.0 + rng.next_gaussian(), rng.next_gaussian()});
        sm.labels.push_back(0);
        sm.scores.push_back({2.0 + rng.next_gaussian(), -1.0 + rng.next_gaussian()});
        sm.labels.push_back(50);
    }
    auto model = svm_train(sm, 6.0);

    ScoreMatrix shifted = sm;
    const double dx = 13.5, dy = -4.0;
    for (auto& s : shifted.scores) {
        s[0] += dx;
        s[1] += dy;
    }
    auto model_shift = svm_train(shifted, 6.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> p = {4.0 * rng.next_gaussian(), 4.0 * rng.next_gaussian()};
        std::vector<double> ps = {p[0] + dx, p[1] + dy};
        CHECK(svm_predict(model, p) == svm_predict(model_shift, ps));
    }
}

TEST_CASE("evaluate: identity confusion for a separable problem") {
    RngStream rng(508);
    LabeledImageSet train, test;
    // three classes with distinct spatial patterns at high SNR
    std::vector<Map2D> patterns;
    for (int p = 0; p < 3; ++p) patterns.push_back(random_map(9, 9, rng));
    const int states[3] = {0, 10, 200};
    for (int p = 0; p < 3; ++p)
        for (int j = 0; j < 8; ++j) {
            Map2D img(9, 9, 1.0);
            for (std::size_t i = 0; i < img.size(); ++i)
                img.data[i] = (1.0 + p) * patterns[p].data[i] + 0.01 * rng.next_gaussian();
            auto& dst = j < 6 ? train : test;
            dst.images.push_back(img);
            dst.labels.push_back(states[p]);
            dst.timestamps.push_back(p * 8 + j);
        }
    auto basis = pca_fit(train, 4);
    auto scores = score_set(basis, train);
    auto model = svm_train(scores, 6.0);
    auto ev = evaluate(model, basis, test);

    REQUIRE(ev.classes == std::vector<int>({0, 10, 200}));
    CHECK(ev.total == doctest::Approx(1.0));
    for (std::size_t a = 0; a < 3; ++a) {
        double row = 0;
        for (std::size_t b = 0; b < 3; ++b) {
            row += ev.confusion[a][b];
            CHECK(ev.confusion[a][b] == doctest::Approx(a == b ? 1.0 : 0.0));
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(ev.per_class[a] == doctest::Approx(1.0));
    }
}

TEST_CASE("pipeline: synthetic decapped frames classify cleanly, intact never better") {
    DatasetSpec spec;
    spec.states = {{2, 0}, {2, 5}, {2, 50}};
    spec.images_per_state = 8;
    spec.scenario = Scenario::decapped;
    spec.seed = 31;

    SplitConfig scfg;
    scfg.train_fraction = 0.75;
    scfg.seed = 5;

    auto run = [&](Scenario sc, std::size_t bin) {
        auto s2 = spec;
        s2.scenario = sc;
        auto ds = make_dataset(s2);
        auto prepped = preprocess(ds.actives, ds.idles, bin);
        auto sp = split(prepped, scfg);
        auto basis = pca_fit(sp.train, 5);
        auto scores = score_set(basis, sp.train);
        auto model = svm_train(scores, 6.0);
        return evaluate(model, basis, sp.test).total;
    };
    double acc_decapped = run(Scenario::decapped, 2);
    double acc_intact = run(Scenario::intact, 4);
    CHECK(acc_decapped == doctest::Approx(1.0));
    CHECK(acc_intact <= acc_decapped + 1e-12);
}

TEST_CASE("cross-validation: ties in the grid go to the smaller C") {
    RngStream rng(509);
    ScoreMatrix sm;
    for (int j = 0; j < 20; ++j) {
        sm.scores.push_back({-3.0 + rng.next_gaussian()});
        sm.labels.push_back(0);
        sm.scores.push_back({3.0 + rng.next_gaussian()});
        sm.labels.push_back(1);
    }
    double acc = cv_accuracy(sm, 6.0, 5, 17);
    CHECK(acc == doctest::Approx(1.0));
    CHECK(cv_accuracy(sm, 6.0, 5, 17) == acc);  // deterministic
    CHECK(select_C(sm, {0.1, 1.0, 6.0, 10.0, 100.0}, 5, 17) == doctest::Approx(0.1));
}
