#pragma once

// Market model and payoffs for the quantile hedging solver, together with
// the scheme parameters and their CFL checks.
//
// The log-price follows X_t = x + mu*t + sigma*W_t and the wealth process Y
// has drift -f(t, X, Y, Z). Besides the linear complete market there are
// drivers for a borrowing spread and for separate lending/borrowing rates.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qhedge {

/// Raised when a model, payoff or parameter block violates its invariants.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class DriverKind { Linear, BorrowSpread, TwoRates };

/// Selection of the wealth driver f. Rates are checked by check_assumptions,
/// not here.
struct DriverSpec {
    DriverKind kind = DriverKind::Linear;
    double lend_rate = 0.0;    // r, only used by TwoRates
    double borrow_rate = 0.0;  // R, used by BorrowSpread and TwoRates

    static DriverSpec linear() { return {}; }
    static DriverSpec borrow_spread(double R) { return {DriverKind::BorrowSpread, 0.0, R}; }
    static DriverSpec two_rates(double r, double R) { return {DriverKind::TwoRates, r, R}; }
};

const char* to_string(DriverKind kind);

class MarketModel {
public:
    MarketModel(double mu, double sigma, double horizon, DriverSpec driver = DriverSpec::linear());

    double mu() const noexcept { return mu_; }
    double sigma() const noexcept { return sigma_; }
    double horizon() const noexcept { return horizon_; }
    const DriverSpec& driver() const noexcept { return driver_; }

    MarketModel with_driver(DriverSpec driver) const { return {mu_, sigma_, horizon_, driver}; }

private:
    double mu_;
    double sigma_;
    double horizon_;
    DriverSpec driver_;
};

/// Driver f(t, x, y, z). None of the drivers depend on (t, x).
inline double eval_driver(const MarketModel& model, double /*t*/, double /*x*/, double y, double z) {
    const double mu = model.mu();
    const double sigma = model.sigma();
    const DriverSpec& d = model.driver();
    switch (d.kind) {
        case DriverKind::Linear:
            return -z * mu / sigma;
        case DriverKind::BorrowSpread: {
            const double short_cash = std::max(-(y - z / sigma), 0.0);
            return -z * mu / sigma + d.borrow_rate * short_cash;
        }
        case DriverKind::TwoRates: {
            const double short_cash = std::max(-(y - z / sigma), 0.0);
            return -d.lend_rate * y - z * mu / sigma + (d.borrow_rate - d.lend_rate) * short_cash;
        }
    }
    return 0.0;
}

/// Working Lipschitz constant used in the CFL checks, e.g. |mu| + R for the
/// borrowing spread.
double driver_lipschitz(const MarketModel& model);

/// Exact bounds on |df/dy| and |df/dz| for the selected driver.
struct DriverPartialBounds {
    double dy = 0.0;
    double dz = 0.0;
};
DriverPartialBounds driver_partial_bounds(const MarketModel& model);

/// Terminal claim g(x) as a function of the log-price.
class Payoff {
public:
    enum class Kind { Put, Custom };

    static Payoff put(double strike);
    /// Piecewise-linear claim through the samples, constant outside their
    /// range. Throws if a sample slope exceeds the declared Lipschitz constant.
    static Payoff custom(std::vector<std::pair<double, double>> samples, double lipschitz);

    double operator()(double x) const;
    Kind kind() const noexcept { return kind_; }
    double strike() const noexcept { return strike_; }
    double bound() const noexcept { return bound_; }
    double lipschitz() const noexcept { return lipschitz_; }
    const std::vector<std::pair<double, double>>& samples() const noexcept { return samples_; }

private:
    Payoff() = default;

    Kind kind_ = Kind::Put;
    double strike_ = 0.0;
    double bound_ = 0.0;
    double lipschitz_ = 0.0;
    std::vector<std::pair<double, double>> samples_;
};

struct SchemeParams {
    double theta = 0.2;
    double M = 2.0;
    double picard_tol = 1e-5;
    int picard_max_iters = 200000;
    /// Overrides driver_lipschitz in the CFL checks when set.
    std::optional<double> lipschitz_L;

    void validate() const;
    double lipschitz(const MarketModel& model) const {
        return lipschitz_L ? *lipschitz_L : driver_lipschitz(model);
    }
};

/// Direction of the one-sided drift difference. Forward for mu >= 0.
enum class Upwind { Forward, Backward };

inline Upwind upwind_for(const MarketModel& model) {
    return model.mu() >= 0.0 ? Upwind::Forward : Upwind::Backward;
}

struct AssumptionCheck {
    std::string name;
    bool passed = true;
    std::string detail;  // violating sample for failed checks
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;
    Upwind upwind = Upwind::Forward;

    bool all_passed() const;
    const AssumptionCheck* find(const std::string& name) const;
};

/// Sampled verification of the standing assumptions on (f, g, mu).
AssumptionReport check_assumptions(const MarketModel& model, const Payoff& payoff);

enum class CflCondition {
    SpaceStepAtMostOne,  // delta <= 1
    LaxFriedrichs,       // h L / (2 delta) <= theta
    ThetaBelowQuarter,   // theta < 1/4
    DriftBelowSpace,     // |mu| h <= delta
    SpaceBelowMTime,     // delta <= M h
};

const char* to_string(CflCondition c);

struct CflReport {
    std::vector<CflCondition> violations;

    bool ok() const noexcept { return violations.empty(); }
    bool violates(CflCondition c) const;
    std::string describe() const;
};

CflReport check_cfl(double h, double delta, const SchemeParams& params, const MarketModel& model);

}  // namespace qhedge
