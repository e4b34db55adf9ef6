#include "mcstats.hpp"

#include <cmath>
#include <stdexcept>

namespace rfk {

uint64_t mix64(uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double Rng::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

namespace {
uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}
}  // namespace

uint64_t SeedLedger::key(std::string_view tag, uint64_t mesh_index, uint64_t path_index) const {
    uint64_t h = mix64(master ^ fnv1a(tag));
    h = mix64(h ^ (0x9e3779b97f4a7c15ULL * (mesh_index + 1)));
    h = mix64(h ^ (0xd1b54a32d192ed03ULL * (path_index + 1)));
    return h;
}

SlopeFit slope_fit(std::span<const double> h, std::span<const double> y) {
    if (h.size() != y.size()) throw std::invalid_argument("slope_fit: size mismatch");
    if (h.size() < 4) throw std::invalid_argument("slope_fit: need at least 4 points");
    const size_t n = h.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!(h[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("slope_fit: inputs must be strictly positive");
        const double lx = std::log(h[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    const double dn = static_cast<double>(n);
    const double vx = sxx - sx * sx / dn;
    const double vy = syy - sy * sy / dn;
    const double cxy = sxy - sx * sy / dn;
    SlopeFit out;
    out.slope = cxy / vx;
    out.intercept = (sy - out.slope * sx) / dn;
    out.r2 = (vy > 0.0) ? (cxy * cxy) / (vx * vy) : 1.0;
    return out;
}

double sample_mean(std::span<const double> samples) {
    if (samples.empty()) throw std::invalid_argument("sample_mean: empty input");
    double s = 0;
    for (double x : samples) s += x;
    return s / static_cast<double>(samples.size());
}

double sample_stddev(std::span<const double> samples) {
    const size_t m = samples.size();
    if (m < 2) return 0.0;
    const double mu = sample_mean(samples);
    double s2 = 0;
    for (double x : samples) {
        const double d = x - mu;
        s2 += d * d;
    }
    return std::sqrt(s2 / static_cast<double>(m - 1));
}

MeanCi mean_ci(std::span<const double> samples, double level) {
    if (samples.empty()) throw std::invalid_argument("mean_ci: empty input");
    if (samples.size() < 2) return {samples[0], 0.0, 0.0};
    MeanCi out;
    out.mean = sample_mean(samples);
    out.stderr_ = sample_stddev(samples) / std::sqrt(static_cast<double>(samples.size()));
    const double z = normal_quantile(0.5 + 0.5 * level);
    out.halfwidth = z * out.stderr_;
    return out;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p out of (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace rfk
