#pragma once

#include "lawgp/common.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace lawgp {

enum class DomainKind { Rectangle, Star, PeriodicInterval };

struct BoundingBox {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool contains(const Point& p) const { return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax; }
};

/// Computational domain. Star-shaped domains use the polar radius
///   r(g) = base + sum_j a_j sin(j g) + b_j cos(j g),  g in [0, 2pi).
/// A periodic interval is the 1D domain [xmin, xmax) with wrap-around.
class Domain {
public:
    struct Harmonic {
        int order = 1;
        double sin_coef = 0.0;
        double cos_coef = 0.0;
    };

    static Domain rectangle(double xmin, double xmax, double ymin, double ymax);
    static Domain star(double base_radius, std::vector<Harmonic> harmonics, BoundingBox box);
    static Domain periodic_interval(double xmin, double xmax);

    DomainKind kind() const { return kind_; }
    int dimension() const { return kind_ == DomainKind::PeriodicInterval ? 1 : 2; }
    const BoundingBox& bounding_box() const { return box_; }
    double period() const { return box_.xmax - box_.xmin; }

    double radius(double angle) const;
    double radius_derivative(double angle) const;
    bool contains(const Point& p) const;

    /// Boundary sampled at (approximately) uniform arclength spacing h.
    /// Returns points and outward unit normals.
    std::pair<std::vector<Point>, std::vector<Point>> sample_boundary(double h) const;

    /// Euclidean distance to the boundary curve (exact for rectangles,
    /// polyline approximation for star domains).
    double distance_to_boundary(const Point& p) const;

    double base_radius() const { return base_radius_; }
    const std::vector<Harmonic>& harmonics() const { return harmonics_; }

private:
    DomainKind kind_ = DomainKind::Rectangle;
    BoundingBox box_;
    double base_radius_ = 1.0;
    std::vector<Harmonic> harmonics_;
    std::vector<Point> outline_; // dense polyline of the star boundary
};

struct NodeOptions {
    double spacing = 0.05;        // target spacing h
    double oversampling = 1.0;    // q = |X| / |Y| (approximately)
    int stencil_size = 13;        // n
    int polynomial_degree = 2;    // D_m, only used to validate n
    int relaxation_steps = 30;    // repulsion smoothing passes over interior Y
    std::uint64_t seed = 1;
};

/// Interpolation nodes Y, evaluation nodes X (X starts with a copy of Y),
/// boundary tags and normals, stencil and assignment tables.
/// Immutable once built.
class NodeSet {
public:
    NodeSet() = default;

    /// Builds stencil and assignment tables for given point sets.
    NodeSet(int dimension, double period, std::vector<Point> y, std::vector<bool> y_boundary,
            std::vector<Point> y_normals, std::vector<Point> x, std::vector<bool> x_boundary,
            std::vector<Point> x_normals, double spacing, int stencil_size);

    int dimension() const { return dim_; }
    bool periodic() const { return period_ > 0.0; }
    double period() const { return period_; }
    double spacing() const { return spacing_; }
    int stencil_size() const { return stencil_size_; }

    std::size_t num_interp() const { return y_.size(); }
    std::size_t num_eval() const { return x_.size(); }

    const std::vector<Point>& interp_points() const { return y_; }
    const std::vector<Point>& eval_points() const { return x_; }
    const std::vector<bool>& interp_boundary() const { return y_boundary_; }
    const std::vector<bool>& eval_boundary() const { return x_boundary_; }
    const std::vector<Point>& eval_normals() const { return x_normals_; }
    const std::vector<Point>& interp_normals() const { return y_normals_; }

    /// stencil(i): indices of the n nearest Y nodes of y_i, sorted by
    /// (distance, index); the first entry is i itself.
    const std::vector<int>& stencil(std::size_t i) const { return stencils_[i]; }
    /// s(x_j): index of the Y node nearest to x_j (ties -> lowest index).
    int assignment(std::size_t j) const { return assignment_[j]; }
    const std::vector<int>& assignments() const { return assignment_; }

    /// argmin_i |p - y_i| with ties broken by the lowest index.
    int nearest_stencil(const Point& p) const;
    /// The k nearest Y nodes, sorted by (distance, index).
    std::vector<int> nearest(const Point& p, int k) const;

    /// Displacement a - b, wrapped for periodic 1D sets.
    Point displacement(const Point& a, const Point& b) const;

    void save_csv(const std::filesystem::path& path) const;
    static NodeSet load_csv(const std::filesystem::path& path, int dimension, double period, int stencil_size);

private:
    void build_hash();

    int dim_ = 2;
    double period_ = 0.0;
    double spacing_ = 0.0;
    int stencil_size_ = 0;
    std::vector<Point> y_, x_;
    std::vector<bool> y_boundary_, x_boundary_;
    std::vector<Point> y_normals_, x_normals_;
    std::vector<std::vector<int>> stencils_;
    std::vector<int> assignment_;

    // uniform grid hash over Y
    double cell_ = 1.0;
    double gx0_ = 0.0, gy0_ = 0.0;
    int gnx_ = 1, gny_ = 1;
    std::vector<std::vector<int>> cells_;
};

/// Dimension of the bivariate (or univariate) polynomial space of total
/// degree <= degree.
int polynomial_dimension(int degree, int spatial_dim = 2);

NodeSet generate_nodes(const Domain& domain, const NodeOptions& options);

} // namespace lawgp
