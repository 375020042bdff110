#include "qdm/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "qdm/errors.hpp"
#include "qdm/parallel.hpp"
#include "qdm/recon.hpp"
#include "qdm/rng.hpp"

namespace qdm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Preprocessing and splitting
// ---------------------------------------------------------------------------

LabeledImageSet preprocess(const LabeledImageSet& raw, const LabeledImageSet& idles,
                           std::size_t bin_factor) {
    raw.validate();
    idles.validate();
    if (idles.size() == 0) throw UsageError("preprocess: need at least one idle image");
    if (bin_factor == 0) throw UsageError("preprocess: bin factor must be >= 1");

    LabeledImageSet out;
    out.scenario = raw.scenario;
    out.labels = raw.labels;
    out.timestamps = raw.timestamps;
    out.images.reserve(raw.size());

    for (std::size_t j = 0; j < raw.size(); ++j) {
        // nearest idle in time; the earlier frame wins a tie
        std::size_t best = 0;
        for (std::size_t i = 1; i < idles.size(); ++i) {
            double d = std::abs(idles.timestamps[i] - raw.timestamps[j]);
            double db = std::abs(idles.timestamps[best] - raw.timestamps[j]);
            if (d < db || (d == db && idles.timestamps[i] < idles.timestamps[best])) best = i;
        }
        const Map2D& a = raw.images[j];
        const Map2D& idle = idles.images[best];
        if (!a.same_shape(idle))
            throw UsageError("preprocess: active image " + std::to_string(j) +
                             " and idle image " + std::to_string(best) + " differ in shape");
        Map2D sub = a;
        for (std::size_t i = 0; i < sub.size(); ++i) sub.data[i] -= idle.data[i];
        out.images.push_back(bin_factor == 1 ? std::move(sub) : bin_map(sub, bin_factor));
    }
    return out;
}

void SplitConfig::validate() const {
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw UsageError("split: train fraction must lie strictly between 0 and 1");
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, RngStream& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.next_u64() % i]);
}

LabeledImageSet take(const LabeledImageSet& set, std::vector<std::size_t> idx) {
    std::sort(idx.begin(), idx.end());  // keep acquisition order inside each half
    LabeledImageSet out;
    out.scenario = set.scenario;
    for (std::size_t i : idx) {
        out.images.push_back(set.images[i]);
        out.labels.push_back(set.labels[i]);
        out.timestamps.push_back(set.timestamps[i]);
    }
    return out;
}

}  // namespace

SplitResult split(const LabeledImageSet& set, const SplitConfig& cfg) {
    cfg.validate();
    set.validate();
    if (set.size() == 0) throw UsageError("split: empty image set");

    std::vector<std::size_t> train_idx, test_idx;
    if (cfg.stratified) {
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);
        for (auto& [label, idx] : by_class) {
            if (idx.size() < 2)
                throw UsageError("split: class " + std::to_string(label) +
                                 " has fewer than 2 images; cannot stratify");
            RngStream rng(cfg.seed, 0x5011ull + static_cast<std::uint64_t>(label));
            shuffle_indices(idx, rng);
            std::size_t m = static_cast<std::size_t>(cfg.train_fraction *
                                                     static_cast<double>(idx.size()));
            train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + m);
            test_idx.insert(test_idx.end(), idx.begin() + m, idx.end());
        }
    } else {
        std::vector<std::size_t> idx(set.size());
        std::iota(idx.begin(), idx.end(), 0);
        RngStream rng(cfg.seed, 0x517ull);
        shuffle_indices(idx, rng);
        std::size_t m =
            static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(idx.size()));
        train_idx.assign(idx.begin(), idx.begin() + m);
        test_idx.assign(idx.begin() + m, idx.end());
    }
    return {take(set, std::move(train_idx)), take(set, std::move(test_idx))};
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

void PCABasis::validate() const {
    for (const auto& c : components)
        if (!c.same_shape(mean)) throw UsageError("pca basis: component shape mismatch");
    for (std::size_t a = 0; a < components.size(); ++a)
        for (std::size_t b = a; b < components.size(); ++b) {
            double dot = 0;
            for (std::size_t i = 0; i < mean.size(); ++i)
                dot += components[a].data[i] * components[b].data[i];
            double want = a == b ? 1.0 : 0.0;
            if (std::abs(dot - want) > 1e-10)
                throw UsageError("pca basis: components not orthonormal");
        }
    double sum = 0;
    for (std::size_t i = 0; i < explained.size(); ++i) {
        if (explained[i] < 0 || (i && explained[i] > explained[i - 1] + 1e-15))
            throw UsageError("pca basis: variance fractions not non-increasing");
        sum += explained[i];
    }
    if (sum > 1.0 + 1e-9) throw UsageError("pca basis: variance fractions exceed 1");
}

PCABasis pca_fit(const LabeledImageSet& train, std::size_t k) {
    train.validate();
    const std::size_t n = train.size();
    if (n == 0) throw UsageError("pca_fit: empty training set");
    if (k == 0) throw UsageError("pca_fit: need at least one component");
    if (k > n)
        throw UsageError("pca_fit: " + std::to_string(k) + " components requested from only " +
                         std::to_string(n) + " images");

    const Map2D& first = train.images[0];
    const std::size_t d = first.size();
    PCABasis basis;
    basis.mean = Map2D(first.rows, first.cols, first.pixel_size, 0.0);
    for (const auto& img : train.images)
        for (std::size_t i = 0; i < d; ++i) {
            if (!std::isfinite(img.data[i]))
                throw UsageError("pca_fit: images contain non-finite pixels");
            basis.mean.data[i] += img.data[i];
        }
    for (double& v : basis.mean.data) v /= static_cast<double>(n);

    MatrixXd X(n, d);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < d; ++i)
            X(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                train.images[j].data[i] - basis.mean.data[i];

    // images are long vectors but few: work with the n x n Gram matrix
    MatrixXd gram = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");
    const double total_var = std::max(gram.trace(), 0.0);

    std::vector<VectorXd> accepted;
    for (std::size_t i = 0; i < k; ++i) {
        Eigen::Index col = static_cast<Eigen::Index>(n - 1 - i);  // eigenvalues ascend
        double lambda = std::max(es.eigenvalues()(col), 0.0);
        VectorXd comp = X.transpose() * es.eigenvectors().col(col);
        double norm = comp.norm();
        if (!(norm > 1e-12 * std::sqrt(std::max(total_var, 1e-300))))
            throw NumericError("pca_fit: component " + std::to_string(i + 1) +
                               " has no variance support");
        comp /= norm;
        // the Gram route loses orthogonality in the small-eigenvalue tail, so
        // sweep against the accepted components (twice, the usual remedy)
        for (int sweep = 0; sweep < 2; ++sweep) {
            for (const auto& q : accepted) comp -= q.dot(comp) * q;
            norm = comp.norm();
            if (!(norm > 1e-8))
                throw NumericError("pca_fit: component " + std::to_string(i + 1) +
                                   " is degenerate with an earlier one");
            comp /= norm;
        }
        accepted.push_back(comp);
        // sign convention: the largest-magnitude element comes out positive
        Eigen::Index at = 0;
        comp.cwiseAbs().maxCoeff(&at);
        if (comp(at) < 0) comp = -comp;

        Map2D img(first.rows, first.cols, first.pixel_size);
        for (std::size_t p = 0; p < d; ++p) img.data[p] = comp(static_cast<Eigen::Index>(p));
        basis.components.push_back(std::move(img));
        basis.explained.push_back(total_var > 0 ? lambda / total_var : 0.0);
    }
    return basis;
}

std::vector<double> pca_score(const PCABasis& basis, const Map2D& image) {
    if (!image.same_shape(basis.mean))
        throw UsageError("pca_score: image shape does not match the basis");
    const double inv_mn = 1.0 / static_cast<double>(basis.mean.size());
    std::vector<double> out(basis.k(), 0.0);
    for (std::size_t c = 0; c < basis.k(); ++c) {
        double acc = 0;
        const auto& w = basis.components[c].data;
        for (std::size_t i = 0; i < w.size(); ++i)
            acc += w[i] * (image.data[i] - basis.mean.data[i]);
        out[c] = acc * inv_mn;
    }
    return out;
}

ScoreMatrix score_set(const PCABasis& basis, const LabeledImageSet& set, int workers) {
    set.validate();
    ScoreMatrix sm;
    sm.labels = set.labels;
    sm.scores.resize(set.size());
    parallel_for(set.size(), workers, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) sm.scores[j] = pca_score(basis, set.images[j]);
    });
    return sm;
}

// ---------------------------------------------------------------------------
// SVM
// ---------------------------------------------------------------------------

// Dual coordinate solver on maximal-violating pairs. The working pair is
// (argmax g over I_up, argmin g over I_low) with g_t = y_t - u_t and u the
// raw decision values; the optimal bias lies in [max g, min g], so the
// solution is KKT-clean once that interval closes to the tolerance and the
// midpoint serves as b. The interval endpoints keep the +/-1 constants
// separate from the raw values so the midpoint survives cancellation even
// when scores are many orders of magnitude below 1.
BinarySvm svm_solve_binary(const std::vector<std::vector<double>>& points,
                           const std::vector<int>& sign, double C, double tol) {
    const std::size_t m = points.size();
    if (m < 2 || sign.size() != m) throw UsageError("svm: need matching points and labels");
    if (!(C > 0)) throw UsageError("svm: C must be positive");
    const std::size_t dim = points[0].size();
    bool has_pos = false, has_neg = false;
    for (int s : sign) {
        if (s == 1)
            has_pos = true;
        else if (s == -1)
            has_neg = true;
        else
            throw UsageError("svm: labels must be +/-1");
    }
    if (!has_pos || !has_neg) throw UsageError("svm: need points from both classes");

    MatrixXd x(m, dim);
    for (std::size_t i = 0; i < m; ++i) {
        if (points[i].size() != dim) throw UsageError("svm: ragged score matrix");
        for (std::size_t c = 0; c < dim; ++c)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = points[i][c];
    }
    MatrixXd K = x * x.transpose();

    VectorXd alpha = VectorXd::Zero(m);
    VectorXd u = VectorXd::Zero(m);  // sum_j alpha_j y_j K(j, t)

    auto in_up = [&](std::size_t t) {
        return sign[t] == 1 ? alpha(static_cast<Eigen::Index>(t)) < C
                            : alpha(static_cast<Eigen::Index>(t)) > 0;
    };
    auto in_low = [&](std::size_t t) {
        return sign[t] == 1 ? alpha(static_cast<Eigen::Index>(t)) > 0
                            : alpha(static_cast<Eigen::Index>(t)) < C;
    };
    std::size_t i_up = m, j_low = m;
    auto scan = [&]() {
        double hi = -std::numeric_limits<double>::infinity();
        double lo = std::numeric_limits<double>::infinity();
        i_up = j_low = m;
        for (std::size_t t = 0; t < m; ++t) {
            double g = static_cast<double>(sign[t]) - u(static_cast<Eigen::Index>(t));
            if (in_up(t) && g > hi) {
                hi = g;
                i_up = t;
            }
            if (in_low(t) && g < lo) {
                lo = g;
                j_low = t;
            }
        }
        return hi - lo;  // positive gap means a violating pair remains
    };

    const std::size_t max_iter = 500000;
    for (std::size_t it = 0; it < max_iter; ++it) {
        double gap = scan();
        if (i_up == m || j_low == m || gap <= tol) break;
        auto I = static_cast<Eigen::Index>(i_up);
        auto J = static_cast<Eigen::Index>(j_low);

        // descend along alpha_i += y_i d, alpha_j -= y_j d (keeps sum alpha*y)
        double headroom_i = sign[i_up] == 1 ? C - alpha(I) : alpha(I);
        double headroom_j = sign[j_low] == 1 ? alpha(J) : C - alpha(J);
        double quad = K(I, I) + K(J, J) - 2.0 * K(I, J);
        double d = std::min(gap / std::max(quad, 1e-300), std::min(headroom_i, headroom_j));
        if (!(d > 0)) break;
        alpha(I) += sign[i_up] * d;
        alpha(J) -= sign[j_low] * d;
        // snap bound dust so spent multipliers leave the working sets cleanly
        for (Eigen::Index t : {I, J}) {
            if (alpha(t) < 1e-12 * C)
                alpha(t) = 0;
            else if (alpha(t) > C * (1 - 1e-12))
                alpha(t) = C;
        }
        u += d * (K.col(I) - K.col(J));
    }
    if (i_up == m || j_low == m)
        throw NumericError("svm: working sets emptied; problem is degenerate");
    scan();  // refresh the interval endpoints for the bias

    BinarySvm out;
    out.alpha.assign(alpha.data(), alpha.data() + m);
    // midpoint of the feasible bias interval; integer halves cancel exactly
    out.b = 0.5 * static_cast<double>(sign[i_up] + sign[j_low]) -
            0.5 * (u(static_cast<Eigen::Index>(i_up)) + u(static_cast<Eigen::Index>(j_low)));
    return out;
}

SVMModel svm_train(const ScoreMatrix& train, double C) {
    const std::size_t n = train.scores.size();
    if (n == 0 || train.labels.size() != n)
        throw UsageError("svm_train: empty or inconsistent score matrix");
    std::set<int> class_set(train.labels.begin(), train.labels.end());
    if (class_set.size() < 2) throw UsageError("svm_train: need at least two classes");
    const std::size_t dim = train.scores[0].size();

    SVMModel model;
    model.classes.assign(class_set.begin(), class_set.end());
    model.C = C;
    model.dim = dim;

    for (std::size_t a = 0; a < model.classes.size(); ++a)
        for (std::size_t bb = a + 1; bb < model.classes.size(); ++bb) {
            int lo = model.classes[a], hi = model.classes[bb];
            std::vector<std::vector<double>> pts;
            std::vector<int> sgn;
            for (std::size_t j = 0; j < n; ++j) {
                if (train.labels[j] == lo) {
                    pts.push_back(train.scores[j]);
                    sgn.push_back(1);
                } else if (train.labels[j] == hi) {
                    pts.push_back(train.scores[j]);
                    sgn.push_back(-1);
                }
            }
            auto sol = svm_solve_binary(pts, sgn, C, 1e-4);

            PairwiseSVM machine;
            machine.class_lo = lo;
            machine.class_hi = hi;
            machine.b = sol.b;
            machine.w.assign(dim, 0.0);
            for (std::size_t j = 0; j < pts.size(); ++j) {
                double coef = sol.alpha[j] * sgn[j];
                if (coef == 0) continue;
                for (std::size_t c = 0; c < dim; ++c) machine.w[c] += coef * pts[j][c];
            }
            model.machines.push_back(std::move(machine));
        }
    return model;
}

int svm_predict(const SVMModel& model, const std::vector<double>& score) {
    if (score.size() != model.dim)
        throw UsageError("svm_predict: score dimension does not match the model");
    std::map<int, int> votes;
    for (int c : model.classes) votes[c] = 0;
    for (const auto& m : model.machines) {
        double f = m.b;
        for (std::size_t c = 0; c < m.w.size(); ++c) f += m.w[c] * score[c];
        ++votes[f >= 0 ? m.class_lo : m.class_hi];
    }
    int best = model.classes.front();
    for (int c : model.classes)  // ascending: ties stay with the smaller count
        if (votes[c] > votes[best]) best = c;
    return best;
}

Evaluation evaluate(const SVMModel& model, const PCABasis& basis, const LabeledImageSet& test) {
    test.validate();
    if (test.size() == 0) throw UsageError("evaluate: empty test set");

    Evaluation ev;
    ev.classes = model.classes;
    ev.n_samples = test.size();
    const std::size_t nc = ev.classes.size();
    std::map<int, std::size_t> row_of;
    for (std::size_t i = 0; i < nc; ++i) row_of[ev.classes[i]] = i;

    std::vector<std::vector<double>> counts(nc, std::vector<double>(nc, 0.0));
    std::size_t correct = 0;
    for (std::size_t j = 0; j < test.size(); ++j) {
        auto it = row_of.find(test.labels[j]);
        if (it == row_of.end())
            throw UsageError("evaluate: test label " + std::to_string(test.labels[j]) +
                             " unknown to the model");
        int pred = svm_predict(model, pca_score(basis, test.images[j]));
        counts[it->second][row_of[pred]] += 1.0;
        if (pred == test.labels[j]) ++correct;
    }

    ev.confusion.assign(nc, std::vector<double>(nc, 0.0));
    ev.per_class.assign(nc, kNaN);
    for (std::size_t r = 0; r < nc; ++r) {
        double row = 0;
        for (double v : counts[r]) row += v;
        if (row == 0) continue;  // class absent from the test set
        for (std::size_t c = 0; c < nc; ++c) ev.confusion[r][c] = counts[r][c] / row;
        ev.per_class[r] = ev.confusion[r][r];
    }
    ev.total = static_cast<double>(correct) / static_cast<double>(test.size());
    return ev;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

double cv_accuracy(const ScoreMatrix& train, double C, std::size_t folds, std::uint64_t seed) {
    const std::size_t n = train.scores.size();
    if (folds < 2) throw UsageError("cross-validation: need at least 2 folds");
    if (n < folds) throw UsageError("cross-validation: fewer samples than folds");

    // stratified round-robin deal after a per-class shuffle
    std::vector<std::size_t> fold_of(n, 0);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[train.labels[i]].push_back(i);
    for (auto& [label, idx] : by_class) {
        RngStream rng(seed, 0xcf01d + static_cast<std::uint64_t>(label));
        shuffle_indices(idx, rng);
        for (std::size_t j = 0; j < idx.size(); ++j) fold_of[idx[j]] = j % folds;
    }

    std::size_t correct = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        ScoreMatrix tr;
        std::vector<std::size_t> held;
        for (std::size_t i = 0; i < n; ++i) {
            if (fold_of[i] == f) {
                held.push_back(i);
            } else {
                tr.scores.push_back(train.scores[i]);
                tr.labels.push_back(train.labels[i]);
            }
        }
        if (held.empty()) continue;
        auto model = svm_train(tr, C);
        for (std::size_t i : held)
            if (svm_predict(model, train.scores[i]) == train.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

double select_C(const ScoreMatrix& train, const std::vector<double>& grid, std::size_t folds,
                std::uint64_t seed) {
    if (grid.empty()) throw UsageError("cross-validation: empty C grid");
    double best_c = grid.front(), best_acc = -1;
    for (double c : grid) {
        double acc = cv_accuracy(train, c, folds, seed);
        if (acc > best_acc || (acc == best_acc && c < best_c)) {
            best_acc = acc;
            best_c = c;
        }
    }
    return best_c;
}

}  // namespace qdm
