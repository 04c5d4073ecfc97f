#include "lawgp/geometry.hpp"

#include "lawgp/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace lawgp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double polar_angle(const Point& p)
{
    double g = std::atan2(p.y(), p.x());
    return g < 0.0 ? g + kTwoPi : g;
}

} // namespace

int polynomial_dimension(int degree, int spatial_dim)
{
    if (degree < 0)
        return 0;
    if (spatial_dim == 1)
        return degree + 1;
    return (degree + 1) * (degree + 2) / 2;
}

// ---------------------------------------------------------------- Domain

Domain Domain::rectangle(double xmin, double xmax, double ymin, double ymax)
{
    if (!(xmax > xmin && ymax > ymin))
        throw ValidationError("rectangle: empty extent");
    Domain d;
    d.kind_ = DomainKind::Rectangle;
    d.box_ = {xmin, xmax, ymin, ymax};
    return d;
}

Domain Domain::star(double base_radius, std::vector<Harmonic> harmonics, BoundingBox box)
{
    Domain d;
    d.kind_ = DomainKind::Star;
    d.base_radius_ = base_radius;
    d.harmonics_ = std::move(harmonics);
    d.box_ = box;
    // r(g) > 0 and the box must strictly contain the curve
    for (int i = 0; i < 4096; ++i) {
        double g = kTwoPi * i / 4096.0;
        double r = d.radius(g);
        if (!(r > 0.0))
            throw ValidationError("star domain: radius must be positive for all angles");
        Point p(r * std::cos(g), r * std::sin(g));
        if (!(p.x() > box.xmin && p.x() < box.xmax && p.y() > box.ymin && p.y() < box.ymax))
            throw ValidationError("star domain: bounding box does not strictly contain the domain");
    }
    return d;
}

Domain Domain::periodic_interval(double xmin, double xmax)
{
    if (!(xmax > xmin))
        throw ValidationError("periodic interval: empty extent");
    Domain d;
    d.kind_ = DomainKind::PeriodicInterval;
    d.box_ = {xmin, xmax, 0.0, 0.0};
    return d;
}

double Domain::radius(double g) const
{
    double r = base_radius_;
    for (const auto& h : harmonics_)
        r += h.sin_coef * std::sin(h.order * g) + h.cos_coef * std::cos(h.order * g);
    return r;
}

double Domain::radius_derivative(double g) const
{
    double dr = 0.0;
    for (const auto& h : harmonics_)
        dr += h.order * (h.sin_coef * std::cos(h.order * g) - h.cos_coef * std::sin(h.order * g));
    return dr;
}

bool Domain::contains(const Point& p) const
{
    switch (kind_) {
    case DomainKind::Rectangle:
        return box_.contains(p);
    case DomainKind::Star: {
        double rho = p.norm();
        if (rho == 0.0)
            return true;
        return rho <= radius(polar_angle(p));
    }
    case DomainKind::PeriodicInterval:
        return p.x() >= box_.xmin && p.x() < box_.xmax;
    }
    return false;
}

double Domain::distance_to_boundary(const Point& p) const
{
    switch (kind_) {
    case DomainKind::Rectangle:
        return std::min({p.x() - box_.xmin, box_.xmax - p.x(), p.y() - box_.ymin, box_.ymax - p.y()});
    case DomainKind::Star: {
        // first-order estimate: radial gap projected on the boundary normal
        double rho = p.norm();
        double g = rho == 0.0 ? 0.0 : polar_angle(p);
        double r = radius(g), dr = radius_derivative(g);
        double cos_beta = r / std::sqrt(r * r + dr * dr);
        return (r - rho) * cos_beta;
    }
    case DomainKind::PeriodicInterval:
        return std::numeric_limits<double>::infinity();
    }
    return 0.0;
}

std::pair<std::vector<Point>, std::vector<Point>> Domain::sample_boundary(double h) const
{
    std::vector<Point> pts, normals;
    if (kind_ == DomainKind::PeriodicInterval)
        return {pts, normals};

    if (kind_ == DomainKind::Rectangle) {
        const Point corners[4] = {{box_.xmin, box_.ymin}, {box_.xmax, box_.ymin}, {box_.xmax, box_.ymax},
                                  {box_.xmin, box_.ymax}};
        const Point edge_normals[4] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
        for (int e = 0; e < 4; ++e) {
            const Point& a = corners[e];
            const Point& b = corners[(e + 1) % 4];
            int nseg = std::max(1, static_cast<int>(std::lround((b - a).norm() / h)));
            for (int i = 0; i < nseg; ++i) {
                pts.push_back(a + (b - a) * (static_cast<double>(i) / nseg));
                if (i == 0)
                    normals.push_back((edge_normals[e] + edge_normals[(e + 3) % 4]).normalized());
                else
                    normals.push_back(edge_normals[e]);
            }
        }
        return {pts, normals};
    }

    // star: invert cumulative arclength on a fine trapezoid table
    const int fine = 1 << 15;
    std::vector<double> s(fine + 1, 0.0);
    auto speed = [this](double g) {
        double r = radius(g), dr = radius_derivative(g);
        return std::sqrt(r * r + dr * dr);
    };
    double prev = speed(0.0);
    for (int i = 1; i <= fine; ++i) {
        double cur = speed(kTwoPi * i / fine);
        s[i] = s[i - 1] + 0.5 * (prev + cur) * (kTwoPi / fine);
        prev = cur;
    }
    const double length = s[fine];
    const int nb = std::max(3, static_cast<int>(std::lround(length / h)));
    int seg = 0;
    for (int i = 0; i < nb; ++i) {
        double target = length * i / nb;
        while (seg < fine - 1 && s[seg + 1] < target)
            ++seg;
        double frac = (target - s[seg]) / (s[seg + 1] - s[seg]);
        double g = kTwoPi * (seg + frac) / fine;
        double r = radius(g), dr = radius_derivative(g);
        Point p(r * std::cos(g), r * std::sin(g));
        Point tangent(dr * std::cos(g) - r * std::sin(g), dr * std::sin(g) + r * std::cos(g));
        pts.push_back(p);
        normals.push_back(Point(tangent.y(), -tangent.x()).normalized());
    }
    return {pts, normals};
}

// --------------------------------------------------------------- NodeSet

NodeSet::NodeSet(int dimension, double period, std::vector<Point> y, std::vector<bool> y_boundary,
                 std::vector<Point> y_normals, std::vector<Point> x, std::vector<bool> x_boundary,
                 std::vector<Point> x_normals, double spacing, int stencil_size)
    : dim_(dimension), period_(period), spacing_(spacing), stencil_size_(stencil_size), y_(std::move(y)),
      x_(std::move(x)), y_boundary_(std::move(y_boundary)), x_boundary_(std::move(x_boundary)),
      y_normals_(std::move(y_normals)), x_normals_(std::move(x_normals))
{
    if (y_.empty())
        throw ValidationError("node set: no interpolation points");
    if (y_boundary_.size() != y_.size() || y_normals_.size() != y_.size() || x_boundary_.size() != x_.size() ||
        x_normals_.size() != x_.size())
        throw ValidationError("node set: inconsistent array sizes");
    if (stencil_size_ < 1)
        throw ValidationError("node set: stencil size must be positive");
    if (static_cast<std::size_t>(stencil_size_) > y_.size())
        throw ValidationError("insufficient nodes: " + std::to_string(y_.size()) + " interpolation points for stencil size " +
                              std::to_string(stencil_size_));
    build_hash();
    stencils_.resize(y_.size());
    for (std::size_t i = 0; i < y_.size(); ++i)
        stencils_[i] = nearest(y_[i], stencil_size_);
    assignment_.resize(x_.size());
    for (std::size_t j = 0; j < x_.size(); ++j)
        assignment_[j] = nearest_stencil(x_[j]);
}

Point NodeSet::displacement(const Point& a, const Point& b) const
{
    Point d = a - b;
    if (period_ > 0.0)
        d.x() -= period_ * std::round(d.x() / period_);
    return d;
}

void NodeSet::build_hash()
{
    double xmin = y_[0].x(), xmax = xmin, ymin = y_[0].y(), ymax = ymin;
    for (const auto& p : y_) {
        xmin = std::min(xmin, p.x());
        xmax = std::max(xmax, p.x());
        ymin = std::min(ymin, p.y());
        ymax = std::max(ymax, p.y());
    }
    double extent = std::max(xmax - xmin, ymax - ymin);
    cell_ = spacing_ > 0.0 ? spacing_ : (extent > 0.0 ? extent / std::sqrt(static_cast<double>(y_.size())) : 1.0);
    if (!(cell_ > 0.0))
        cell_ = 1.0;
    gx0_ = xmin;
    gy0_ = ymin;
    gnx_ = std::max(1, static_cast<int>(std::floor((xmax - xmin) / cell_)) + 1);
    gny_ = std::max(1, static_cast<int>(std::floor((ymax - ymin) / cell_)) + 1);
    cells_.assign(static_cast<std::size_t>(gnx_) * gny_, {});
    for (std::size_t i = 0; i < y_.size(); ++i) {
        int cx = std::clamp(static_cast<int>(std::floor((y_[i].x() - gx0_) / cell_)), 0, gnx_ - 1);
        int cy = std::clamp(static_cast<int>(std::floor((y_[i].y() - gy0_) / cell_)), 0, gny_ - 1);
        cells_[static_cast<std::size_t>(cy) * gnx_ + cx].push_back(static_cast<int>(i));
    }
}

std::vector<int> NodeSet::nearest(const Point& p, int k) const
{
    if (y_.empty())
        throw ValidationError("nearest: empty node set");
    k = std::min<int>(k, static_cast<int>(y_.size()));
    std::vector<std::pair<double, int>> cand;

    if (period_ > 0.0) {
        cand.reserve(y_.size());
        for (std::size_t i = 0; i < y_.size(); ++i)
            cand.emplace_back(displacement(p, y_[i]).squaredNorm(), static_cast<int>(i));
    } else {
        int cx = std::clamp(static_cast<int>(std::floor((p.x() - gx0_) / cell_)), 0, gnx_ - 1);
        int cy = std::clamp(static_cast<int>(std::floor((p.y() - gy0_) / cell_)), 0, gny_ - 1);
        const int max_ring = std::max(gnx_, gny_);
        std::vector<double> kth;
        for (int ring = 0; ring <= max_ring; ++ring) {
            for (int iy = cy - ring; iy <= cy + ring; ++iy) {
                if (iy < 0 || iy >= gny_)
                    continue;
                bool edge_row = (iy == cy - ring || iy == cy + ring);
                for (int ix = cx - ring; ix <= cx + ring; ix += (edge_row ? 1 : 2 * ring)) {
                    if (ix >= 0 && ix < gnx_)
                        for (int idx : cells_[static_cast<std::size_t>(iy) * gnx_ + ix])
                            cand.emplace_back((p - y_[idx]).squaredNorm(), idx);
                    if (ring == 0)
                        break;
                }
            }
            if (static_cast<int>(cand.size()) >= k) {
                std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
                double bound = ring * cell_;
                if (cand[k - 1].first < bound * bound)
                    break;
            }
        }
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i)
        out[i] = cand[i].second;
    return out;
}

int NodeSet::nearest_stencil(const Point& p) const
{
    return nearest(p, 1).front();
}

void NodeSet::save_csv(const std::filesystem::path& path) const
{
    std::vector<std::vector<std::string>> rows;
    auto emit = [&rows](const std::vector<Point>& pts, const std::vector<bool>& bnd, const std::vector<Point>& nrm,
                        const char* tag) {
        for (std::size_t i = 0; i < pts.size(); ++i)
            rows.push_back({io::format_double(pts[i].x()), io::format_double(pts[i].y()), bnd[i] ? "1" : "0", tag,
                            io::format_double(nrm[i].x()), io::format_double(nrm[i].y())});
    };
    emit(y_, y_boundary_, y_normals_, "Y");
    emit(x_, x_boundary_, x_normals_, "X");
    io::write_csv(path, {"x", "y", "is_boundary", "set", "nx", "ny"}, rows);
}

NodeSet NodeSet::load_csv(const std::filesystem::path& path, int dimension, double period, int stencil_size)
{
    auto t = io::read_csv(path);
    int cx = t.column("x"), cy = t.column("y"), cb = t.column("is_boundary"), cs = t.column("set");
    int cnx = t.column("nx"), cny = t.column("ny");
    if (cx < 0 || cy < 0 || cb < 0 || cs < 0)
        throw RuntimeError("node csv missing columns: " + path.string());
    std::vector<Point> y, x, yn, xn;
    std::vector<bool> yb, xb;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Point p(t.number(r, cx), t.number(r, cy));
        Point n = (cnx >= 0 && cny >= 0) ? Point(t.number(r, cnx), t.number(r, cny)) : Point(0, 0);
        bool b = t.rows[r][cb] == "1";
        if (t.rows[r][cs] == "Y") {
            y.push_back(p);
            yb.push_back(b);
            yn.push_back(n);
        } else {
            x.push_back(p);
            xb.push_back(b);
            xn.push_back(n);
        }
    }
    double extent = 0.0;
    if (!y.empty()) {
        double xmin = y[0].x(), xmax = xmin, ymin = y[0].y(), ymax = ymin;
        for (const auto& p : y) {
            xmin = std::min(xmin, p.x());
            xmax = std::max(xmax, p.x());
            ymin = std::min(ymin, p.y());
            ymax = std::max(ymax, p.y());
        }
        extent = dimension == 1 ? (xmax - xmin) / y.size()
                                : std::sqrt((xmax - xmin) * (ymax - ymin) / static_cast<double>(y.size()));
    }
    return NodeSet(dimension, period, std::move(y), std::move(yb), std::move(yn), std::move(x), std::move(xb),
                   std::move(xn), extent, stencil_size);
}

// ------------------------------------------------------------ generation

namespace {

/// Poisson-disk fill (Bridson growth plus dart-throwing hole fill).
class DiskSampler {
public:
    DiskSampler(const Domain& domain, double radius, double margin, std::mt19937_64& rng)
        : domain_(domain), r_(radius), margin_(margin), rng_(rng)
    {
        const auto& b = domain.bounding_box();
        cell_ = r_ / std::sqrt(2.0);
        x0_ = b.xmin;
        y0_ = b.ymin;
        nx_ = static_cast<int>(std::ceil((b.xmax - b.xmin) / cell_)) + 1;
        ny_ = static_cast<int>(std::ceil((b.ymax - b.ymin) / cell_)) + 1;
        grid_.assign(static_cast<std::size_t>(nx_) * ny_, {});
    }

    void insert_fixed(const Point& p) { insert(p); }

    std::vector<Point> fill()
    {
        std::uniform_real_distribution<double> ux(domain_.bounding_box().xmin, domain_.bounding_box().xmax);
        std::uniform_real_distribution<double> uy(domain_.bounding_box().ymin, domain_.bounding_box().ymax);
        const auto& b = domain_.bounding_box();
        const double area = (b.xmax - b.xmin) * (b.ymax - b.ymin);
        const long darts = 64 + static_cast<long>(8.0 * area / (r_ * r_));
        long misses = 0;
        while (misses < darts) {
            Point p(ux(rng_), uy(rng_));
            if (!valid(p)) {
                ++misses;
                continue;
            }
            misses = 0;
            grow_from(p);
        }
        return added_;
    }

private:
    bool valid(const Point& p) const
    {
        const auto& b = domain_.bounding_box();
        if (!b.contains(p) || !domain_.contains(p) || domain_.distance_to_boundary(p) < margin_)
            return false;
        int cx = static_cast<int>(std::floor((p.x() - x0_) / cell_));
        int cy = static_cast<int>(std::floor((p.y() - y0_) / cell_));
        for (int iy = std::max(0, cy - 2); iy <= std::min(ny_ - 1, cy + 2); ++iy)
            for (int ix = std::max(0, cx - 2); ix <= std::min(nx_ - 1, cx + 2); ++ix)
                for (const Point& q : grid_[static_cast<std::size_t>(iy) * nx_ + ix])
                    if ((p - q).squaredNorm() < r_ * r_)
                        return false;
        return true;
    }

    void insert(const Point& p)
    {
        int cx = std::clamp(static_cast<int>(std::floor((p.x() - x0_) / cell_)), 0, nx_ - 1);
        int cy = std::clamp(static_cast<int>(std::floor((p.y() - y0_) / cell_)), 0, ny_ - 1);
        grid_[static_cast<std::size_t>(cy) * nx_ + cx].push_back(p);
    }

    void grow_from(const Point& seed)
    {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        insert(seed);
        added_.push_back(seed);
        std::vector<Point> active{seed};
        while (!active.empty()) {
            std::size_t idx = static_cast<std::size_t>(unit(rng_) * active.size()) % active.size();
            Point base = active[idx];
            bool found = false;
            for (int attempt = 0; attempt < 30; ++attempt) {
                double angle = 2.0 * std::numbers::pi * unit(rng_);
                double rad = r_ * (1.0 + unit(rng_));
                Point c = base + rad * Point(std::cos(angle), std::sin(angle));
                if (valid(c)) {
                    insert(c);
                    added_.push_back(c);
                    active.push_back(c);
                    found = true;
                    break;
                }
            }
            if (!found) {
                active[idx] = active.back();
                active.pop_back();
            }
        }
    }

    const Domain& domain_;
    double r_, margin_;
    std::mt19937_64& rng_;
    double cell_, x0_, y0_;
    int nx_, ny_;
    std::vector<std::vector<Point>> grid_;
    std::vector<Point> added_;
};


/// Spring-type repulsion smoothing of the free (interior) nodes: each pair
/// closer than the rest length r0 pushes apart, r0 being chosen from the
/// current node density. Nodes that would leave the admissible region are
/// kept in place.
void relax_interior(const Domain& domain, std::vector<Point>& pts, std::size_t fixed, double margin, int iterations)
{
    if (iterations <= 0 || pts.size() <= fixed)
        return;
    const auto& b = domain.bounding_box();
    double area = 0.0;
    {
        // area estimate by the node count and Poisson-disk density is
        // unreliable; integrate the domain indicator on a coarse grid
        const int g = 400;
        long inside = 0;
        for (int i = 0; i < g; ++i)
            for (int j = 0; j < g; ++j)
                inside += domain.contains(Point(b.xmin + (i + 0.5) * (b.xmax - b.xmin) / g,
                                                b.ymin + (j + 0.5) * (b.ymax - b.ymin) / g));
        area = (b.xmax - b.xmin) * (b.ymax - b.ymin) * static_cast<double>(inside) / (double(g) * g);
    }
    // hexagonal packing: area per node = sqrt(3)/2 r0^2
    const double r0 = 1.2 * std::sqrt(2.0 * area / (std::sqrt(3.0) * static_cast<double>(pts.size())));
    const double cell = r0;
    const int nx = static_cast<int>(std::ceil((b.xmax - b.xmin) / cell)) + 1;
    const int ny = static_cast<int>(std::ceil((b.ymax - b.ymin) / cell)) + 1;
    std::vector<std::vector<int>> grid;
    std::vector<Point> force(pts.size());
    for (int it = 0; it < iterations; ++it) {
        grid.assign(static_cast<std::size_t>(nx) * ny, {});
        auto cell_of = [&](const Point& p) {
            int cx = std::clamp(static_cast<int>(std::floor((p.x() - b.xmin) / cell)), 0, nx - 1);
            int cy = std::clamp(static_cast<int>(std::floor((p.y() - b.ymin) / cell)), 0, ny - 1);
            return std::pair{cx, cy};
        };
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto [cx, cy] = cell_of(pts[i]);
            grid[static_cast<std::size_t>(cy) * nx + cx].push_back(static_cast<int>(i));
        }
        std::fill(force.begin(), force.end(), Point::Zero());
        for (std::size_t i = fixed; i < pts.size(); ++i) {
            auto [cx, cy] = cell_of(pts[i]);
            for (int iy = std::max(0, cy - 1); iy <= std::min(ny - 1, cy + 1); ++iy)
                for (int ix = std::max(0, cx - 1); ix <= std::min(nx - 1, cx + 1); ++ix)
                    for (int j : grid[static_cast<std::size_t>(iy) * nx + ix]) {
                        if (static_cast<std::size_t>(j) == i)
                            continue;
                        Point d = pts[i] - pts[j];
                        double len = d.norm();
                        if (len < r0 && len > 0.0)
                            force[i] += (r0 - len) / len * d;
                    }
        }
        for (std::size_t i = fixed; i < pts.size(); ++i) {
            Point cand = pts[i] + 0.2 * force[i];
            if (domain.contains(cand) && domain.distance_to_boundary(cand) >= margin)
                pts[i] = cand;
        }
    }
}

} // namespace

NodeSet generate_nodes(const Domain& domain, const NodeOptions& opt)
{
    if (!(opt.spacing > 0.0))
        throw ValidationError("generate_nodes: spacing must be positive");
    if (!(opt.oversampling >= 1.0))
        throw ValidationError("generate_nodes: oversampling ratio must be >= 1");
    const int m = polynomial_dimension(opt.polynomial_degree, domain.dimension());
    if (opt.stencil_size < m)
        throw ValidationError("stencil smaller than polynomial basis (n = " + std::to_string(opt.stencil_size) +
                              ", m = " + std::to_string(m) + ")");

    std::vector<Point> y, yn;
    std::vector<bool> yb;

    if (domain.kind() == DomainKind::PeriodicInterval) {
        const auto& b = domain.bounding_box();
        const int count = static_cast<int>(std::lround((b.xmax - b.xmin) / opt.spacing));
        if (count < opt.stencil_size)
            throw ValidationError("insufficient nodes: " + std::to_string(count) + " points for stencil size " +
                                  std::to_string(opt.stencil_size));
        for (int i = 0; i < count; ++i) {
            y.emplace_back(b.xmin + (b.xmax - b.xmin) * i / count, 0.0);
            yb.push_back(false);
            yn.emplace_back(0.0, 0.0);
        }
        return NodeSet(1, domain.period(), y, yb, yn, y, yb, yn, (b.xmax - b.xmin) / count, opt.stencil_size);
    }

    std::mt19937_64 rng(opt.seed);
    auto [bpts, bnrm] = domain.sample_boundary(opt.spacing);
    for (std::size_t i = 0; i < bpts.size(); ++i) {
        y.push_back(bpts[i]);
        yb.push_back(true);
        yn.push_back(bnrm[i]);
    }

    DiskSampler interior(domain, 0.7 * opt.spacing, 0.5 * opt.spacing, rng);
    for (const auto& p : bpts)
        interior.insert_fixed(p);
    for (const auto& p : interior.fill()) {
        y.push_back(p);
        yb.push_back(false);
        yn.emplace_back(0.0, 0.0);
    }
    relax_interior(domain, y, bpts.size(), 0.5 * opt.spacing, opt.relaxation_steps);
    if (y.size() < static_cast<std::size_t>(opt.stencil_size))
        throw ValidationError("insufficient nodes: spacing " + std::to_string(opt.spacing) + " places only " +
                              std::to_string(y.size()) + " points, stencil size is " +
                              std::to_string(opt.stencil_size));

    std::vector<Point> x = y, xn = yn;
    std::vector<bool> xb = yb;
    if (opt.oversampling > 1.0) {
        const double hx = opt.spacing / std::sqrt(opt.oversampling);
        DiskSampler extra(domain, 0.7 * hx, 0.5 * hx, rng);
        for (const auto& p : y)
            extra.insert_fixed(p);
        for (const auto& p : extra.fill()) {
            x.push_back(p);
            xb.push_back(false);
            xn.emplace_back(0.0, 0.0);
        }
    }
    return NodeSet(2, 0.0, std::move(y), std::move(yb), std::move(yn), std::move(x), std::move(xb), std::move(xn),
                   opt.spacing, opt.stencil_size);
}

} // namespace lawgp
