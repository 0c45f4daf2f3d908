#include "usc/sparse_dict.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>

namespace usc {

std::uint64_t Dictionary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = hash_combine(h, static_cast<std::uint64_t>(atoms.rows()));
  h = hash_combine(h, static_cast<std::uint64_t>(atoms.cols()));
  for (Eigen::Index j = 0; j < atoms.cols(); ++j)
    for (Eigen::Index i = 0; i < atoms.rows(); ++i) h = hash_combine(h, atoms(i, j));
  return h;
}

std::size_t LineCodes::nnz() const {
  std::size_t n = 0;
  for (const SparseVec& v : patches) n += v.size();
  return n;
}

std::vector<Eigen::VectorXd> patchify(const SampledSignal& x, int patch_len) {
  if (patch_len < 1) throw InvalidParameter("patchify: patch_len must be >= 1");
  const int n = x.size();
  const int p_count = (n + patch_len - 1) / patch_len;
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(p_count));
  for (int p = 0; p < p_count; ++p) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(patch_len);
    const int start = p * patch_len;
    const int len = std::min(patch_len, n - start);
    for (int i = 0; i < len; ++i) v(i) = x.samples[static_cast<std::size_t>(start + i)];
    out[static_cast<std::size_t>(p)] = std::move(v);
  }
  return out;
}

Eigen::MatrixXd patchify_matrix(const SampledSignal& x, int patch_len) {
  const std::vector<Eigen::VectorXd> ps = patchify(x, patch_len);
  Eigen::MatrixXd m(patch_len, static_cast<Eigen::Index>(ps.size()));
  for (std::size_t p = 0; p < ps.size(); ++p) m.col(static_cast<Eigen::Index>(p)) = ps[p];
  return m;
}

SampledSignal unpatchify(const std::vector<Eigen::VectorXd>& patches, int n_samples,
                         double fs_hz, double t0_s) {
  SampledSignal out;
  out.fs_hz = fs_hz;
  out.t0_s = t0_s;
  out.samples.assign(static_cast<std::size_t>(n_samples), 0.0);
  int i = 0;
  for (const Eigen::VectorXd& p : patches) {
    for (Eigen::Index j = 0; j < p.size() && i < n_samples; ++j, ++i)
      out.samples[static_cast<std::size_t>(i)] = p(j);
    if (i >= n_samples) break;
  }
  return out;
}

SparseVec omp_encode(const Eigen::VectorXd& patch, const Dictionary& dict,
                     double tol, int max_nnz) {
  const int q = dict.patch_len();
  const int k_total = dict.n_atoms();
  if (patch.size() != q) throw InvalidParameter("omp_encode: patch length != Q");
  for (int k = 0; k < k_total; ++k)
    if (dict.atoms.col(k).norm() < 1e-12)
      throw InvalidParameter("omp_encode: zero-norm dictionary column");
  if (max_nnz < 0) max_nnz = q;
  max_nnz = std::min(max_nnz, std::min(q, k_total));

  SparseVec code;
  if (max_nnz == 0) return code;

  Eigen::VectorXd residual = patch;
  double rnorm = residual.norm();
  if (rnorm <= tol) return code;

  std::vector<int> support;
  std::vector<char> used(static_cast<std::size_t>(k_total), 0);
  Eigen::MatrixXd d_sel(q, max_nnz);
  Eigen::VectorXd coeffs;

  while (static_cast<int>(support.size()) < max_nnz) {
    // Most correlated unused atom.
    Eigen::VectorXd corr = dict.atoms.transpose() * residual;
    int best = -1;
    double best_abs = 0.0;
    for (int k = 0; k < k_total; ++k) {
      if (used[static_cast<std::size_t>(k)]) continue;
      const double a = std::abs(corr(k));
      if (a > best_abs) {
        best_abs = a;
        best = k;
      }
    }
    if (best < 0 || best_abs < 1e-14 * std::max(1.0, patch.norm())) break;

    used[static_cast<std::size_t>(best)] = 1;
    d_sel.col(static_cast<Eigen::Index>(support.size())) = dict.atoms.col(best);
    support.push_back(best);
    const int s = static_cast<int>(support.size());

    // Full least-squares refit on the selected atoms.
    const auto ds = d_sel.leftCols(s);
    coeffs = (ds.transpose() * ds).ldlt().solve(ds.transpose() * patch);
    residual = patch - ds * coeffs;
    rnorm = residual.norm();
    if (rnorm <= tol) break;
  }

  code.reserve(support.size());
  for (std::size_t i = 0; i < support.size(); ++i)
    code.push_back({support[i], coeffs(static_cast<Eigen::Index>(i))});
  return code;
}

Eigen::VectorXd reconstruct_patch(const SparseVec& code, const Dictionary& dict) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(dict.patch_len());
  for (const SparseEntry& e : code) {
    if (e.atom < 0 || e.atom >= dict.n_atoms())
      throw InvalidParameter("reconstruct_patch: atom index out of range");
    y += e.coef * dict.atoms.col(e.atom);
  }
  return y;
}

std::vector<Eigen::VectorXd> reconstruct_patches(const std::vector<SparseVec>& codes,
                                                 const Dictionary& dict) {
  std::vector<Eigen::VectorXd> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    out[i] = reconstruct_patch(codes[i], dict);
  return out;
}

TrainingSet training_set_from_lines(const std::vector<SampledSignal>& lines,
                                    int patch_len) {
  std::vector<Eigen::VectorXd> all;
  for (const SampledSignal& line : lines) {
    std::vector<Eigen::VectorXd> ps = patchify(line, patch_len);
    all.insert(all.end(), ps.begin(), ps.end());
  }
  TrainingSet t;
  t.patches.resize(patch_len, static_cast<Eigen::Index>(all.size()));
  for (std::size_t i = 0; i < all.size(); ++i)
    t.patches.col(static_cast<Eigen::Index>(i)) = all[i];
  return t;
}

namespace {

double total_error(const Eigen::MatrixXd& y, const Eigen::MatrixXd& dict,
                   const std::vector<SparseVec>& codes) {
  double err = 0.0;
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    Eigen::VectorXd r = y.col(i);
    for (const SparseEntry& e : codes[static_cast<std::size_t>(i)])
      r -= e.coef * dict.col(e.atom);
    err += r.squaredNorm();
  }
  return err;
}

}  // namespace

Dictionary ksvd_train(const TrainingSet& train, const KsvdOptions& opts,
                      KsvdReport* report) {
  const int q = train.patch_len();
  const int n = train.n_examples();
  const int k_total = opts.n_atoms;
  if (n < k_total)
    throw InvalidParameter("ksvd_train: need n_examples >= n_atoms for well-posed training");
  if (k_total < 1) throw InvalidParameter("ksvd_train: n_atoms must be >= 1");

  Dictionary dict;
  dict.atoms.resize(q, k_total);
  std::mt19937_64 rng = substream_rng(opts.seed, "ksvd-init");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < k_total; ++k) {
    for (int i = 0; i < q; ++i) dict.atoms(i, k) = gauss(rng);
    dict.atoms.col(k).normalize();
  }

  const double tol = opts.sparsity > 0 ? 0.0 : opts.tol;
  const int max_nnz = opts.sparsity > 0 ? opts.sparsity : q / 2;

  std::vector<SparseVec> codes(static_cast<std::size_t>(n));
  if (report) {
    report->iteration_error.clear();
    report->replaced_atoms = 0;
  }

  for (int iter = 0; iter < opts.n_iters; ++iter) {
    // Sparse coding sweep.
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < n; ++i)
      codes[static_cast<std::size_t>(i)] = omp_encode(train.patches.col(i), dict, tol, max_nnz);

    // Atom update sweep: rank-1 SVD of the restricted residual.
    for (int k = 0; k < k_total; ++k) {
      std::vector<int> users;
      for (int i = 0; i < n; ++i)
        for (const SparseEntry& e : codes[static_cast<std::size_t>(i)])
          if (e.atom == k) {
            users.push_back(i);
            break;
          }

      if (users.empty()) {
        // Replace a dead atom with the worst-represented example.
        int worst = 0;
        double worst_err = -1.0;
        for (int i = 0; i < n; ++i) {
          Eigen::VectorXd r = train.patches.col(i);
          for (const SparseEntry& e : codes[static_cast<std::size_t>(i)])
            r -= e.coef * dict.atoms.col(e.atom);
          const double err = r.squaredNorm();
          if (err > worst_err) {
            worst_err = err;
            worst = i;
          }
        }
        Eigen::VectorXd cand = train.patches.col(worst);
        const double norm = cand.norm();
        if (norm > 1e-12) {
          dict.atoms.col(k) = cand / norm;
          if (report) ++report->replaced_atoms;
        }
        continue;
      }

      Eigen::MatrixXd residual(q, static_cast<Eigen::Index>(users.size()));
      for (std::size_t u = 0; u < users.size(); ++u) {
        const int i = users[u];
        Eigen::VectorXd r = train.patches.col(i);
        for (const SparseEntry& e : codes[static_cast<std::size_t>(i)])
          if (e.atom != k) r -= e.coef * dict.atoms.col(e.atom);
        residual.col(static_cast<Eigen::Index>(u)) = r;
      }

      Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual,
                                            Eigen::ComputeThinU | Eigen::ComputeThinV);
      dict.atoms.col(k) = svd.matrixU().col(0);
      const Eigen::VectorXd new_coefs = svd.singularValues()(0) * svd.matrixV().col(0);
      for (std::size_t u = 0; u < users.size(); ++u) {
        for (SparseEntry& e : codes[static_cast<std::size_t>(users[u])])
          if (e.atom == k) e.coef = new_coefs(static_cast<Eigen::Index>(u));
      }
    }

    if (report)
      report->iteration_error.push_back(total_error(train.patches, dict.atoms, codes));
  }

  for (int k = 0; k < k_total; ++k) dict.atoms.col(k).normalize();
  return dict;
}

}  // namespace usc
