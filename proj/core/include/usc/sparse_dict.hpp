#ifndef USC_SPARSE_DICT_HPP
#define USC_SPARSE_DICT_HPP

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "usc/signal.hpp"

namespace usc {

/// Learned patch dictionary, columns unit L2 norm.
struct Dictionary {
  Eigen::MatrixXd atoms;  // Q x K

  int patch_len() const { return static_cast<int>(atoms.rows()); }
  int n_atoms() const { return static_cast<int>(atoms.cols()); }
  std::uint64_t hash() const;
};

struct SparseEntry {
  int atom = 0;
  double coef = 0.0;
};

/// One patch's sparse coefficient vector, entries with distinct atom indices.
using SparseVec = std::vector<SparseEntry>;

/// Codes for all patches of all elements of one scan line, patch (m, p)
/// stored at index m * n_patches + p.
struct LineCodes {
  int n_elements = 0;
  int n_patches = 0;
  int n_atoms = 0;
  std::vector<SparseVec> patches;

  const SparseVec& at(int element, int patch) const {
    return patches[static_cast<std::size_t>(element) * n_patches + patch];
  }
  SparseVec& at(int element, int patch) {
    return patches[static_cast<std::size_t>(element) * n_patches + patch];
  }
  std::size_t nnz() const;
};

struct TrainingSet {
  Eigen::MatrixXd patches;  // Q x n_examples

  int patch_len() const { return static_cast<int>(patches.rows()); }
  int n_examples() const { return static_cast<int>(patches.cols()); }
};

struct KsvdOptions {
  int n_atoms = 400;
  int n_iters = 10;
  // Coding constraint for the training sweeps: fixed sparsity when
  // sparsity > 0, otherwise error threshold tol.
  int sparsity = 3;
  double tol = 0.0;
  std::uint64_t seed = 0;
};

struct KsvdReport {
  // Total squared representation error after each iteration's atom update.
  std::vector<double> iteration_error;
  int replaced_atoms = 0;
};

/// Splits into ceil(N/Q) non-overlapping patches, last one zero-padded.
std::vector<Eigen::VectorXd> patchify(const SampledSignal& x, int patch_len);
Eigen::MatrixXd patchify_matrix(const SampledSignal& x, int patch_len);

/// Reassembles patches and truncates back to n_samples.
SampledSignal unpatchify(const std::vector<Eigen::VectorXd>& patches, int n_samples,
                         double fs_hz, double t0_s = 0.0);

/// K-SVD: alternates OMP coding and per-atom rank-1 SVD updates. Atoms that
/// end an iteration unused are replaced by the worst-represented example.
Dictionary ksvd_train(const TrainingSet& train, const KsvdOptions& opts,
                      KsvdReport* report = nullptr);

/// Orthogonal matching pursuit with full least-squares refit per step.
/// Stops when the residual L2 norm <= tol or nnz == max_nnz.
SparseVec omp_encode(const Eigen::VectorXd& patch, const Dictionary& dict,
                     double tol, int max_nnz);

Eigen::VectorXd reconstruct_patch(const SparseVec& code, const Dictionary& dict);
std::vector<Eigen::VectorXd> reconstruct_patches(const std::vector<SparseVec>& codes,
                                                 const Dictionary& dict);

/// Builds a training set from beamformed scan lines (patchified, concatenated).
TrainingSet training_set_from_lines(const std::vector<SampledSignal>& lines,
                                    int patch_len);

}  // namespace usc

#endif
