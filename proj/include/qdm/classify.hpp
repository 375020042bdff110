#pragma once

#include <cstdint>
#include <vector>

#include "qdm/forward.hpp"
#include "qdm/map2d.hpp"

namespace qdm {

// Idle subtraction and binning: each active image minus the idle frame
// nearest in time (earlier frame wins a tie), then block-binned.
LabeledImageSet preprocess(const LabeledImageSet& raw, const LabeledImageSet& idles,
                           std::size_t bin_factor);

struct SplitConfig {
    double train_fraction = 0.75;
    std::uint64_t seed = 0;
    bool stratified = true;
    void validate() const;
};

struct SplitResult {
    LabeledImageSet train, test;
};

// Deterministic shuffled split; stratified mode draws floor(fraction * n)
// training images per class.
SplitResult split(const LabeledImageSet& set, const SplitConfig& cfg);

struct PCABasis {
    Map2D mean;
    std::vector<Map2D> components;   // unit Frobenius norm, sign-normalized
    std::vector<double> explained;   // variance fractions, non-increasing

    std::size_t k() const { return components.size(); }
    // orthonormality to 1e-10, fraction ordering, shape agreement
    void validate() const;
};

// Principal components of the mean-centered flattened images via the Gram
// matrix (images are long vectors but few).
PCABasis pca_fit(const LabeledImageSet& train, std::size_t k = 9);

// Per-component inner product with the centered image, normalized by the
// pixel count.
std::vector<double> pca_score(const PCABasis& basis, const Map2D& image);

struct ScoreMatrix {
    std::vector<std::vector<double>> scores;  // [image][component]
    std::vector<int> labels;
};

ScoreMatrix score_set(const PCABasis& basis, const LabeledImageSet& set, int workers = 1);

// One linear decision function per unordered class pair:
// f(x) = w.x + b, f > 0 votes for class_lo (the smaller label).
struct PairwiseSVM {
    int class_lo = 0;
    int class_hi = 0;
    std::vector<double> w;
    double b = 0;
};

struct SVMModel {
    std::vector<int> classes;  // ascending
    std::vector<PairwiseSVM> machines;
    double C = 6.0;
    std::size_t dim = 0;
};

// Dual solution of a single soft-margin binary problem (labels +/-1).
// Exposed so optimality of the solver can be audited from outside;
// svm_train builds on it.
struct BinarySvm {
    std::vector<double> alpha;
    double b = 0;
};
BinarySvm svm_solve_binary(const std::vector<std::vector<double>>& points,
                           const std::vector<int>& sign, double C, double tol = 1e-4);

// Soft-margin linear SVMs trained one-vs-one in the dual by sequential
// minimal optimization (KKT tolerance 1e-4); deterministic given input order.
SVMModel svm_train(const ScoreMatrix& train, double C = 6.0);

// Majority vote across the pairwise machines; vote ties resolve toward the
// smaller oscillator count.
int svm_predict(const SVMModel& model, const std::vector<double>& score);

struct Evaluation {
    std::vector<int> classes;
    std::vector<std::vector<double>> confusion;  // row-normalized over true class
    std::vector<double> per_class;               // diagonal entries
    double total = 0;                            // fraction of samples correct
    std::size_t n_samples = 0;
};

Evaluation evaluate(const SVMModel& model, const PCABasis& basis, const LabeledImageSet& test);

// Stratified cross-validated accuracy for one regularization setting, and a
// grid search returning the best C (ties toward the smaller value).
double cv_accuracy(const ScoreMatrix& train, double C, std::size_t folds, std::uint64_t seed);
double select_C(const ScoreMatrix& train, const std::vector<double>& grid, std::size_t folds,
                std::uint64_t seed);

}  // namespace qdm
