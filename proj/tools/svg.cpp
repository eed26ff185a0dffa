#include "cli.hpp"

#include "battkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace battkit::cli {

namespace fs = std::filesystem;

namespace {

bool read_columns(const fs::path& p, std::string& header, std::vector<double>& x, std::vector<double>& y) {
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            header = line.substr(line.find_first_not_of("# "));
            continue;
        }
        std::istringstream ls(line);
        double a = 0.0, b = 0.0;
        std::string rest;
        if (!(ls >> a >> b) || (ls >> rest)) return false;
        x.push_back(a);
        y.push_back(b);
    }
    return !x.empty();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace

std::vector<fs::path> render_svgs(const fs::path& dir) {
    std::vector<fs::path> inputs;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());

    constexpr double W = 640, H = 400, L = 70, R = 20, T = 30, B = 50;
    std::vector<fs::path> written;
    for (const auto& p : inputs) {
        std::string header;
        std::vector<double> x, y;
        if (!read_columns(p, header, x, y)) continue;
        auto [x0, x1] = std::minmax_element(x.begin(), x.end());
        auto [y0, y1] = std::minmax_element(y.begin(), y.end());
        double xl = *x0, xh = *x1, yl = *y0, yh = *y1;
        if (xh == xl) xh = xl + 1.0;
        if (yh == yl) yh = yl + 1.0;
        auto px = [&](double v) { return L + (v - xl) / (xh - xl) * (W - L - R); };
        auto py = [&](double v) { return H - B - (v - yl) / (yh - yl) * (H - T - B); };

        std::ostringstream s;
        s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
        s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        s << "<text x=\"" << L << "\" y=\"20\" font-size=\"13\">" << p.filename().string() << "</text>\n";
        s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
          << "\" stroke=\"black\"/>\n";
        s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" font-size=\"11\">" << fmt(xl) << "</text>\n";
        s << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(xh)
          << "</text>\n";
        s << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(yl)
          << "</text>\n";
        s << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(yh)
          << "</text>\n";
        s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" font-size=\"12\" text-anchor=\"middle\">"
          << header << "</text>\n";
        s << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < x.size(); ++i) s << fmt(px(x[i])) << ',' << fmt(py(y[i])) << ' ';
        s << "\"/>\n</svg>\n";

        auto target = p;
        target.replace_extension(".svg");
        std::ofstream out(target, std::ios::binary);
        if (!out) throw IoError("cli", "cannot write " + target.string());
        out << s.str();
        written.push_back(target);
    }
    return written;
}

} // namespace battkit::cli
