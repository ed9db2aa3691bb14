#include "flowcap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowcap/rng.hpp"

namespace flowcap {

bool GradcheckReport::pass() const {
    return std::all_of(params.begin(), params.end(), [](const auto& p) { return p.pass; });
}

double GradcheckReport::worst() const {
    double w = 0.0;
    for (const auto& p : params) w = std::max(w, p.max_rel_error);
    return w;
}

std::string GradcheckReport::summary() const {
    std::ostringstream os;
    bool any = false;
    for (const auto& p : params) {
        if (p.pass) continue;
        any = true;
        os << label << ": " << p.name << " rel_err=" << p.max_rel_error << " at " << p.worst_index
           << " (analytic " << p.analytic << ", numeric " << p.numeric << ")\n";
    }
    if (!any) os << "ok";
    return os.str();
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

GradcheckReport compare_gradients(std::string label, const std::vector<std::string>& names,
                                  const std::vector<std::vector<double>>& analytic,
                                  const std::vector<std::vector<double>>& numeric, double tol) {
    if (analytic.size() != numeric.size() || names.size() != analytic.size()) {
        throw ContractError("compare_gradients: mismatched gradient sets");
    }
    GradcheckReport report;
    report.label = std::move(label);
    report.tol = tol;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        if (analytic[k].size() != numeric[k].size()) throw ContractError("compare_gradients: size mismatch for " + names[k]);
        ParamGradError e;
        e.name = names[k];
        for (std::size_t i = 0; i < analytic[k].size(); ++i) {
            const double r = relative_error(analytic[k][i], numeric[k][i]);
            if (i == 0 || r > e.max_rel_error) {
                e.max_rel_error = r;
                e.worst_index = i;
                e.analytic = analytic[k][i];
                e.numeric = numeric[k][i];
            }
        }
        e.pass = e.max_rel_error <= tol;
        report.params.push_back(std::move(e));
    }
    return report;
}

template <class T>
std::vector<std::vector<double>> numeric_gradients(const std::function<T()>& f, std::span<BasicTensor<T>> inputs,
                                                   double eps, Stencil stencil) {
    NoGradGuard guard;
    std::vector<std::vector<double>> out;
    for (auto& t : inputs) {
        std::vector<double> g(t.numel());
        auto d = t.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            const T orig = d[i];
            auto at = [&](double offset) {
                d[i] = static_cast<T>(orig + offset);
                return static_cast<double>(f());
            };
            if (stencil == Stencil::TwoPoint) {
                g[i] = (at(eps) - at(-eps)) / (2.0 * eps);
            } else {
                // Paired differences first, so an f that ignores this input gives exactly 0.
                const double near = at(eps) - at(-eps);
                const double far = at(2 * eps) - at(-2 * eps);
                g[i] = (8.0 * near - far) / (12.0 * eps);
            }
            d[i] = orig;
        }
        out.push_back(std::move(g));
    }
    return out;
}

template <class T>
GradcheckReport gradcheck(const ScalarFn<T>& f, std::vector<BasicTensor<T>> inputs, double eps, double tol,
                          std::vector<std::string> names, Stencil stencil) {
    std::vector<BasicTensor<T>> leaves;
    for (auto& in : inputs) leaves.push_back(BasicTensor<T>::from(in.shape(), std::vector<T>(in.data().begin(), in.data().end()), true));
    if (names.empty()) {
        for (std::size_t i = 0; i < leaves.size(); ++i) names.push_back("input" + std::to_string(i));
    }
    auto out = f(leaves);
    if (out.numel() != 1) throw ContractError("gradcheck: function is not scalar-valued, got " + shape_str(out.shape()));
    backward(out);
    std::vector<std::vector<double>> analytic;
    for (auto& l : leaves) {
        std::vector<double> g(l.numel(), 0.0);
        if (l.has_grad()) std::copy(l.grad().begin(), l.grad().end(), g.begin());
        analytic.push_back(std::move(g));
    }
    auto numeric = numeric_gradients<T>([&] { return f(leaves).item(); }, leaves, eps, stencil);
    return compare_gradients("gradcheck", names, analytic, numeric, tol);
}

OpCheckResult run_op_check(const OpCheck& check, std::uint64_t seed, double tol32, double tol64) {
    Rng rng(seed);
    std::vector<Tensor64> inputs64;
    std::vector<Tensor> inputs32;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < check.input_shapes.size(); ++i) {
        const auto& sh = check.input_shapes[i];
        std::vector<float> v(shape_numel(sh));
        for (auto& x : v) x = static_cast<float>(rng.normal());
        // Both precisions start from the same float-representable point.
        inputs32.push_back(Tensor::from(sh, v, true));
        inputs64.push_back(Tensor64::from(sh, std::vector<double>(v.begin(), v.end()), false));
        names.push_back(check.name + ".input" + std::to_string(i));
    }

    auto out32 = check.f32(inputs32);
    if (out32.numel() != 1) throw ContractError("op check " + check.name + " is not scalar-valued");
    backward(out32);
    std::vector<std::vector<double>> analytic32;
    for (auto& t : inputs32) {
        std::vector<double> g(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), g.begin());
        analytic32.push_back(std::move(g));
    }
    auto numeric64 =
        numeric_gradients<double>([&] { return check.f64(inputs64).item(); }, inputs64, kOracleStep, Stencil::FourPoint);

    OpCheckResult result;
    result.mixed = compare_gradients(check.name + " (32-bit analytic)", names, analytic32, numeric64, tol32);
    result.double_precision = gradcheck<double>(check.f64, inputs64, kOracleStep, tol64, names, Stencil::FourPoint);
    result.double_precision.label = check.name + " (64-bit analytic)";
    return result;
}

template GradcheckReport gradcheck(const ScalarFn<float>&, std::vector<Tensor>, double, double, std::vector<std::string>,
                                   Stencil);
template GradcheckReport gradcheck(const ScalarFn<double>&, std::vector<Tensor64>, double, double,
                                   std::vector<std::string>, Stencil);
template std::vector<std::vector<double>> numeric_gradients(const std::function<float()>&, std::span<Tensor>, double,
                                                            Stencil);
template std::vector<std::vector<double>> numeric_gradients(const std::function<double()>&, std::span<Tensor64>,
                                                            double, Stencil);

}  // namespace flowcap
