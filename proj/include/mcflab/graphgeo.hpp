#pragma once

#include <memory>
#include <vector>

#include "mcflab/foliation.hpp"

namespace mcflab {

/// Geometry of an equivariant base hypersurface at one arclength value.
/// Frame: tangent T = (cos phi, sin phi), normal N = (sin phi, -cos phi);
/// principal curvatures k (profile), kp = N_s/S, kq = N_t/T (sphere
/// factors) with the sign for which H = k + p kp + q kq.
struct BaseGeometry {
    double S = 0.0;
    double T = 0.0;
    double phi = 0.0;
    double k = 0.0;
    double dk = 0.0;
    double kp = 0.0;
    double dkp = 0.0;
    double kq = 0.0;
    double dkq = 0.0;
    bool axis = false;  ///< on the t = 0 axis (leaf tip)
};

/// Base curve: the cone line (arclength = distance to the vertex) or a
/// foliation leaf (arclength from the tip).
class BaseCurve {
public:
    static BaseCurve cone(int p, int q);
    static BaseCurve leaf(std::shared_ptr<const FoliationLeaf> leaf);

    BaseGeometry at(double sigma) const;
    bool is_cone() const { return leaf_ == nullptr; }
    int p() const { return p_; }
    int q() const { return q_; }
    const FoliationLeaf* leaf_ptr() const { return leaf_.get(); }
    /// Point B(sigma) + u N(sigma) in the (s, t) quadrant.
    std::pair<double, double> point(double sigma, double u) const;

private:
    int p_ = 0;
    int q_ = 0;
    std::shared_ptr<const FoliationLeaf> leaf_;
};

/// u, u', u'' at a point.
struct GraphJet {
    double u = 0.0;
    double du = 0.0;
    double d2u = 0.0;
};

/// Induced metric of the graph in the base orthonormal frame, and the
/// normal product V = nu . nu_bar.
struct GraphMetric {
    double g_ss = 1.0;
    double g_pp = 1.0;
    double g_qq = 1.0;
    double V = 1.0;
};

GraphMetric graph_metric_jet(const BaseGeometry& b, const GraphJet& j);

/// H_bar from the second fundamental form of the graph expressed in base
/// quantities (metric, Hessian of u, Codazzi terms).
double mean_curvature_jet(const BaseGeometry& b, const GraphJet& j, int p, int q);

/// H_bar from the explicit curvature of the graph profile curve; an
/// independent route used for cross-checks.
double mean_curvature_direct(const BaseGeometry& b, const GraphJet& j, int p, int q);

/// |A|^2 of the graph hypersurface (profile curvature and the two sphere
/// factors).
double second_fundamental_norm2_jet(const BaseGeometry& b, const GraphJet& j, int p, int q);

/// Delta u + |A|^2 u on the base.
double jacobi_operator_jet(const BaseGeometry& b, const GraphJet& j, int p, int q);

/// E(u) = -H_bar/V - (Delta u + |A|^2 u).
double error_term_jet(const BaseGeometry& b, const GraphJet& j, int p, int q);

/// Sampled graph over a base on a uniform arclength grid.
struct GraphChart {
    BaseCurve base;
    std::vector<double> sigma;  ///< uniform, increasing
    std::vector<double> u;

    /// Centered differences, second-order one-sided closures at the ends;
    /// an even reflection at a leaf tip (sigma = 0).
    GraphJet jet(std::size_t i) const;
};

/// Throws NumericalError when the metric degenerates.
GraphMetric graph_metric(const GraphChart& chart, std::size_t i);

/// Throws NumericalError near a fold (V <= 0.01).
double graph_mean_curvature(const GraphChart& chart, std::size_t i);

double error_term(const GraphChart& chart, std::size_t i);

}  // namespace mcflab
