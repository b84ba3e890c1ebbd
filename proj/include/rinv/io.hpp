// rinv/io.hpp
//
// Binary vectors, nodal field CSV with a JSON sidecar, result documents and
// a side-by-side field plot.

#ifndef RINV_IO_HPP
#define RINV_IO_HPP

#include "rinv/bench.hpp"
#include "rinv/pde.hpp"

#include <bit>
#include <cstring>

namespace rinv {

// 8-byte magic, uint64 length, float64 values; all little endian.
inline constexpr char kVectorMagic[8] = {'R', 'I', 'N', 'V', 'V', 'E', 'C', '1'};

inline void write_vector_bin(const std::filesystem::path& p, const Vector& v) {
    static_assert(std::endian::native == std::endian::little, "binary format assumes a little-endian host");
    std::ofstream f(p, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot open " + p.string() + " for writing");
    std::uint64_t n = std::uint64_t(v.size());
    f.write(kVectorMagic, 8);
    f.write(reinterpret_cast<const char*>(&n), 8);
    f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(n * sizeof(double)));
    if (!f) fail(ErrorKind::io, "write failed for " + p.string());
}

inline Vector read_vector_bin(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot open " + p.string());
    char magic[8];
    std::uint64_t n = 0;
    f.read(magic, 8);
    f.read(reinterpret_cast<char*>(&n), 8);
    if (!f || std::memcmp(magic, kVectorMagic, 8) != 0) fail(ErrorKind::io, p.string() + " is not a vector file");
    Vector v(static_cast<Index>(n));
    f.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(double)));
    if (!f) fail(ErrorKind::io, p.string() + " is truncated");
    return v;
}

// node,x,y,<columns...> per node plus <name>.json describing the grid.
inline void write_field_csv(const std::filesystem::path& p, const Grid2D& G,
                            const std::vector<std::pair<std::string, Vector>>& columns) {
    std::ostringstream os;
    os << "node,x,y";
    for (auto& [name, v] : columns) {
        require(v.size() == G.num_nodes(), ErrorKind::precondition, "field column has wrong size");
        os << ',' << name;
    }
    os << '\n';
    for (Index i = 0; i < G.num_nodes(); ++i) {
        os << i << ',' << fmt17(G.points()[i].x()) << ',' << fmt17(G.points()[i].y());
        for (auto& [name, v] : columns) os << ',' << fmt17(v[i]);
        os << '\n';
    }
    write_text(p, os.str());
    nlohmann::json side = {{"grid", G.shape() == Grid2D::Shape::square ? "square" : "disk"},
                           {"n", G.n()},
                           {"nodes", G.num_nodes()},
                           {"h", G.h()}};
    nlohmann::json cols = nlohmann::json::array();
    for (auto& [name, v] : columns) cols.push_back(name);
    side["columns"] = cols;
    std::filesystem::path sp = p;
    sp.replace_extension(".json");
    write_text(sp, side.dump(2) + "\n");
}

inline nlohmann::json to_json(const ReconResult& R) {
    nlohmann::json j;
    j["alpha"] = R.alpha;
    j["beta"] = R.beta;
    j["status"] = R.status;
    j["outer_iterations"] = R.outer_iterations;
    j["n_stop"] = R.n_stop;
    j["dim_x"] = R.x.size();
    j["dim_r_hat"] = R.r_hat.size();
    j["objective_trace"] = R.objective_trace;
    nlohmann::json c = nlohmann::json::object();
    for (auto& [k, v] : R.certificates) c[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(fmt17(v));
    j["certificates"] = c;
    return j;
}

namespace detail {

inline std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    int r = int(255 * std::clamp(1.5 * t, 0.0, 1.0));
    int g = int(255 * std::clamp(1.5 - std::abs(3.0 * t - 1.5), 0.0, 1.0));
    int b = int(255 * std::clamp(1.5 * (1.0 - t), 0.0, 1.0));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace detail

// Truth and reconstruction side by side on a shared color scale.
inline std::string field_pair_svg(const Grid2D& G, const Vector& truth, const Vector& recon) {
    const double S = 300, gap = 30, pad = 20;
    double lo = std::min(truth.minCoeff(), recon.minCoeff());
    double hi = std::max(truth.maxCoeff(), recon.maxCoeff());
    if (!(hi > lo)) hi = lo + 1.0;
    double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
    for (auto& p : G.points()) {
        xmin = std::min(xmin, p.x());
        xmax = std::max(xmax, p.x());
        ymin = std::min(ymin, p.y());
        ymax = std::max(ymax, p.y());
    }
    double span = std::max(xmax - xmin, ymax - ymin);
    double cell = std::max(2.0, S * G.h() / span);
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n",
                  2 * S + gap + 2 * pad, S + 2 * pad + 20);
    os << buf << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const Vector* fields[2] = {&truth, &recon};
    const char* titles[2] = {"truth", "reconstruction"};
    for (int k = 0; k < 2; ++k) {
        double ox = pad + k * (S + gap);
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"13\">%s</text>\n", ox, pad + 2.0,
                      titles[k]);
        os << buf;
        for (Index i = 0; i < G.num_nodes(); ++i) {
            double px = ox + (G.points()[i].x() - xmin) / span * S - cell / 2;
            double py = pad + 20 + (ymax - G.points()[i].y()) / span * S - cell / 2;
            double t = ((*fields[k])[i] - lo) / (hi - lo);
            std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n", px,
                          py, cell, cell, detail::heat_color(t).c_str());
            os << buf;
        }
    }
    os << "</svg>\n";
    return os.str();
}

// Coefficient profiles for problems without a grid.
inline std::string profile_pair_svg(const Vector& truth, const Vector& recon) {
    const double W = 640, H = 360, L = 60, R = 20, T = 20, B = 40;
    double lo = std::min(truth.minCoeff(), recon.minCoeff());
    double hi = std::max(truth.maxCoeff(), recon.maxCoeff());
    if (!(hi > lo)) hi = lo + 1.0;
    const Index n = truth.size();
    auto px = [&](Index i) { return L + (n > 1 ? double(i) / double(n - 1) : 0.0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - lo) / (hi - lo) * (H - T - B); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const Vector* fields[2] = {&truth, &recon};
    const char* colors[2] = {"#1f77b4", "#d62728"};
    char buf[64];
    for (int k = 0; k < 2; ++k) {
        os << "<polyline fill=\"none\" stroke=\"" << colors[k] << "\" points=\"";
        Index stride = std::max<Index>(1, n / 800);
        for (Index i = 0; i < n; i += stride) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(i), py((*fields[k])[i]));
            os << buf;
        }
        os << "\"/>\n";
    }
    os << "<text x=\"" << L << "\" y=\"" << H - 10 << "\" font-size=\"12\">index (blue truth, red reconstruction)</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace rinv

#endif
