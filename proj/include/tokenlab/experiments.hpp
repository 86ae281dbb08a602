#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "tokenlab/report.hpp"
#include "tokenlab/rng.hpp"

namespace tokenlab {

// ---------------------------------------------------------------------------
// Error accumulation

enum class VarianceMode { constant, decaying };

// How the ensemble means are drawn. `literal` averages j member draws for
// step j (cost O(K^2) per trial); `exact_law` draws the mean directly from
// its exact distribution N(0, (1/j^2) sum_i sigma_i^2), which is the same
// joint law at O(K) cost. Results agree in distribution; `literal` exists so
// tests can confirm that.
enum class MemberSampling { literal, exact_law };

struct ErrorAccumConfig {
    std::vector<std::uint64_t> k_grid = {4, 16, 64, 256, 1024};
    double sigma2 = 1.0;
    VarianceMode variance_mode = VarianceMode::constant;
    std::int64_t trials = 10000;
    std::uint64_t seed = 0;
    MemberSampling member_sampling = MemberSampling::exact_law;
    int workers = 1;

    void validate() const; // all K >= 2, sigma2 > 0, trials >= 100
};

// Mean of an ensemble of per-step predictions; errors on empty input.
double next_all_ensemble(const std::vector<double>& predictions);

// Simulates per-position prediction errors under the bounded-variance
// assumption. Reports, per K: naive sequential cumulative squared error
// (one error per position) against the K*sigma^2 bound, and ensemble
// cumulative squared error (mean of j member errors at step j) against
// sigma^2*H_K (constant variance) or 4*sigma^2*(1-K^{-1/2}) (decaying
// variance, member i of step j drawn with variance sigma^2/sqrt(i)).
ExperimentReport error_accumulation_experiment(const ErrorAccumConfig& cfg);

// ---------------------------------------------------------------------------
// AR convergence

struct ArProcess {
    std::vector<double> coefficients; // beta_1..beta_p
    double sigma2 = 1.0;

    void validate() const; // sum |beta_i| < 1, sigma2 > 0
};

// beta_i = c * r^i truncated below `trunc` (default machine-negligible).
ArProcess geometric_ar_process(double c, double r, double sigma2, double trunc = 1e-14);

std::vector<double> simulate_ar(const ArProcess& process, std::size_t length, std::size_t burnin,
                                Rng& rng);

// OLS on the lagged design via normal equations with ridge jitter 1e-10.
// p = 0 returns an empty vector (marginal-mean predictor).
std::vector<double> fit_ar_ls(const std::vector<double>& series, std::uint32_t p,
                              double ridge = 1e-10);

// One-step-ahead MSE of fitted coefficients on a held-out segment.
double ar_holdout_mse(const std::vector<double>& coeffs, const std::vector<double>& holdout);

struct ArConvergenceConfig {
    double c = 0.5, r = 0.5;
    double sigma2 = 1.0;
    std::vector<std::uint32_t> p_grid = {1, 2, 4, 8, 16};
    std::size_t t = 100000;
    std::size_t holdout = 20000;
    std::size_t burnin = 500;
    std::uint64_t seed = 0;

    void validate() const;
};

// Fits AR(p) per p on one simulated series and measures held-out MSE;
// passes when |MSE(p_max) - sigma^2| / sigma^2 < 0.05 and MSE is
// non-increasing in p within 1% slack.
ExperimentReport ar_convergence_experiment(const ArConvergenceConfig& cfg);

// ---------------------------------------------------------------------------
// LAD-Lasso

struct LadFitOptions {
    double tol = 1e-9;          // stop when objective change < tol
    std::int64_t max_iter = 50000;
    int restarts = 0;           // extra runs from random inits, best kept
    std::uint64_t restart_seed = 0;
};

struct LadFitResult {
    Eigen::VectorXd beta;
    double objective = 0.0;
    std::int64_t iterations = 0;
};

// (1/n)||y - X beta||_1 + lambda*||beta||_1 with |u| ~= sqrt(u^2 + eps^2),
// eps = 1e-6.
double lad_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& beta, double lambda);

// Monotone backtracking proximal gradient with soft-threshold prox.
LadFitResult lad_lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                           const LadFitOptions& opts = {});

struct LadLassoConfig {
    std::vector<std::uint64_t> n_grid = {200, 400, 800, 1600, 3200};
    std::uint32_t p = 256;
    std::uint32_t s = 4;
    double sigma = 1.0;
    double c0 = 1.0;              // lambda = c0 * sigma * sqrt(log p / n)
    double signal_magnitude = 1.0;
    std::int64_t trials = 20;
    std::uint64_t seed = 0;
    int workers = 1;

    void validate() const; // s < p; every n > s * log p
};

// Design matrices have iid standard-normal entries; the 1/sqrt(n) column
// scaling of the theory lives in the objective's 1/n factor (restricted-
// eigenvalue normalization (1/n)||Xv||^2).
ExperimentReport lad_scaling_experiment(const LadLassoConfig& cfg);

// ---------------------------------------------------------------------------
// Alternating-SGD convergence

struct AltOptConfig {
    std::vector<std::uint64_t> t_grid = {100, 1000, 10000};
    std::uint32_t dim = 8;
    double eig_min = 0.1, eig_max = 10.0; // log-uniform quadratic spectrum
    double sin_amp = 0.5;                 // a
    double sin_freq = 2.0;                // omega
    double sigma_mode = 1.0;
    double eta0 = 0.0;                    // 0 means 1/L
    double theta0_range = 2.0;
    std::int64_t trials = 50;
    std::uint64_t seed = 0;
    int workers = 1;

    // Smoothness constant of the objective family
    // L(theta) = 1/2 sum lam_i theta_i^2 + a sum (1 - cos(omega theta_i)).
    double smoothness() const { return eig_max + sin_amp * sin_freq * sin_freq; }
    void validate() const; // 0 < eta0 <= 1/L when eta0 given
};

// Runs theta_{t+1} = theta_t - eta_t (grad + mode noise) with
// eta_t = eta0 (1 + eta0^2 L^2 t)^{-1/2}; the per-step mode m in {0,1,2} is
// uniform and scales the Gaussian noise by sigma_mode*(0.5 + 0.5 m).
// Records mean min_{t<=T} ||grad||^2 per T and the ratio
// min * sqrt(T) / (1 + log T); passes when the ratio is non-increasing
// across the grid within 20% and the deterministic quadratic run
// (noise 0, a 0) reaches grad^2 < 1e-4 at T = 10^4.
ExperimentReport altopt_convergence_experiment(const AltOptConfig& cfg);

// ---------------------------------------------------------------------------

// Maps [0, items) over `workers` threads; fn must only touch its own index's
// state. Results are identical for any worker count.
void parallel_for(std::size_t items, int workers, const std::function<void(std::size_t)>& fn);

} // namespace tokenlab
