#pragma once

// Finite-difference verification of analytic gradients.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowcap/tensor.hpp"

namespace flowcap {

struct ParamGradError {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool pass = true;
};

struct GradcheckReport {
    std::string label;
    double tol = 0.0;
    std::vector<ParamGradError> params;

    bool pass() const;
    double worst() const;
    // One line per failing parameter, or "ok".
    std::string summary() const;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

template <class T>
using ScalarFn = std::function<BasicTensor<T>(std::span<const BasicTensor<T>>)>;

// Central difference stencils: 2-point (error O(eps^2)) or 4-point
// (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h with error O(eps^4).
enum class Stencil { TwoPoint, FourPoint };

// Analytic gradient of f w.r.t. every input versus central differences in the
// same precision. Inputs are used as leaves (requires_grad is forced on).
template <class T>
GradcheckReport gradcheck(const ScalarFn<T>& f, std::vector<BasicTensor<T>> inputs, double eps, double tol,
                          std::vector<std::string> names = {}, Stencil stencil = Stencil::TwoPoint);

// Central differences of f around `inputs`, evaluated with recording off.
template <class T>
std::vector<std::vector<double>> numeric_gradients(const std::function<T()>& f,
                                                   std::span<BasicTensor<T>> inputs, double eps,
                                                   Stencil stencil = Stencil::TwoPoint);

// Element-wise comparison of two gradient sets with the same layout.
GradcheckReport compare_gradients(std::string label, const std::vector<std::string>& names,
                                  const std::vector<std::vector<double>>& analytic,
                                  const std::vector<std::vector<double>>& numeric, double tol);

// A differentiable op exercised on random inputs. The same generic body is
// bound for both precisions so the 64-bit route can serve as the oracle for
// the 32-bit analytic gradient.
struct OpCheck {
    std::string name;
    std::vector<Shape> input_shapes;
    ScalarFn<float> f32;
    ScalarFn<double> f64;
};

const std::vector<OpCheck>& registered_op_checks();

struct OpCheckResult {
    GradcheckReport mixed;   // float analytic vs double central differences
    GradcheckReport double_precision;  // double analytic vs double central differences
};

// The 64-bit differences use the 4-point stencil with h = 1e-3, which keeps
// both truncation and roundoff well under the 64-bit tolerance.
inline constexpr double kOracleStep = 1e-3;
OpCheckResult run_op_check(const OpCheck& check, std::uint64_t seed, double tol32 = 1e-2, double tol64 = 1e-5);

}  // namespace flowcap
