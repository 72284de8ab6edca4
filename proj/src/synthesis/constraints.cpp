#include "pm/synthesis/constraints.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "pm/core/error.hpp"

namespace pm {

namespace {

[[noreturn]] void bad_line(int number, const std::string& why) {
    throw InputError("annotation line " + std::to_string(number) + ": " + why);
}

std::vector<double> read_numbers(std::istringstream& in, std::size_t count, int number) {
    std::vector<double> v;
    double d = 0;
    while (in >> d) v.push_back(d);
    if (!in.eof()) bad_line(number, "expected a number");
    if (v.size() != count)
        bad_line(number, "expected " + std::to_string(count) + " numbers, got " + std::to_string(v.size()));
    for (const double x : v)
        if (!std::isfinite(x)) bad_line(number, "non-finite number");
    return v;
}

int as_int(double v, int number) {
    if (v != std::floor(v) || std::abs(v) > 1e9) bad_line(number, "expected an integer");
    return int(v);
}

}  // namespace

Annotations parse_annotations(const std::string& text) {
    Annotations out;
    std::istringstream lines(text);
    std::string raw;
    int number = 0;
    while (std::getline(lines, raw)) {
        ++number;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        std::istringstream in(raw);
        std::string what, kind;
        if (!(in >> what)) continue;
        if (!(in >> kind)) bad_line(number, "missing kind after '" + what + "'");
        ModelConstraint m;
        if (what == "line") {
            if (kind == "free" || kind == "slope") {
                const auto v = read_numbers(in, 4, number);
                m.kind = kind == "free" ? ModelKind::FreeLine : ModelKind::FixedSlopeLine;
                m.x0 = v[0], m.y0 = v[1], m.x1 = v[2], m.y1 = v[3];
            } else if (kind == "pos") {
                const auto v = read_numbers(in, 8, number);
                m.kind = ModelKind::FixedPositionLine;
                m.x0 = v[0], m.y0 = v[1], m.x1 = v[2], m.y1 = v[3];
                m.tx0 = v[4], m.ty0 = v[5], m.tx1 = v[6], m.ty1 = v[7];
            } else {
                bad_line(number, "unknown line kind '" + kind + "'");
            }
            out.models.push_back(m);
        } else if (what == "region") {
            if (kind == "translate") {
                const auto v = read_numbers(in, 4, number);
                m.kind = ModelKind::TranslateRegion;
                m.x0 = v[0], m.y0 = v[1], m.x1 = v[2], m.y1 = v[3];
                out.models.push_back(m);
            } else if (kind == "scale") {
                const auto v = read_numbers(in, 5, number);
                m.kind = ModelKind::ScaleRegion;
                m.x0 = v[0], m.y0 = v[1], m.x1 = v[2], m.y1 = v[3];
                m.scale = v[4];
                if (!(m.scale > 0)) bad_line(number, "scale must be positive");
                out.models.push_back(m);
            } else if (kind == "move") {
                const auto v = read_numbers(in, 6, number);
                HardRegion h;
                h.source = {as_int(v[0], number), as_int(v[1], number), as_int(v[2], number), as_int(v[3], number)};
                h.offset = {as_int(v[4], number), as_int(v[5], number)};
                out.hard.push_back(h);
            } else {
                bad_line(number, "unknown region kind '" + kind + "'");
            }
        } else {
            bad_line(number, "unknown record '" + what + "'");
        }
    }
    return out;
}

std::string format_annotations(const Annotations& a) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (const ModelConstraint& m : a.models) {
        switch (m.kind) {
            case ModelKind::FreeLine: out << "line free "; break;
            case ModelKind::FixedSlopeLine: out << "line slope "; break;
            case ModelKind::FixedPositionLine: out << "line pos "; break;
            case ModelKind::TranslateRegion: out << "region translate "; break;
            case ModelKind::ScaleRegion: out << "region scale "; break;
        }
        out << m.x0 << ' ' << m.y0 << ' ' << m.x1 << ' ' << m.y1;
        if (m.kind == ModelKind::FixedPositionLine) out << ' ' << m.tx0 << ' ' << m.ty0 << ' ' << m.tx1 << ' ' << m.ty1;
        if (m.kind == ModelKind::ScaleRegion) out << ' ' << m.scale;
        out << '\n';
    }
    for (const HardRegion& h : a.hard)
        out << "region move " << h.source.x0 << ' ' << h.source.y0 << ' ' << h.source.x1 << ' ' << h.source.y1 << ' '
            << h.offset.x << ' ' << h.offset.y << '\n';
    return out.str();
}

void validate_annotations(const Annotations& a, Extent source, Extent target) {
    auto inside = [](double x, double y, Extent e) { return x >= 0 && y >= 0 && x <= e.width && y <= e.height; };
    for (const ModelConstraint& m : a.models) {
        if (!inside(m.x0, m.y0, source) || !inside(m.x1, m.y1, source))
            throw InvalidArgument("model geometry outside the source image");
        if (m.is_line()) {
            if (std::hypot(m.x1 - m.x0, m.y1 - m.y0) < 1.0) throw InvalidArgument("line shorter than one pixel");
            if (m.kind == ModelKind::FixedPositionLine) {
                if (!inside(m.tx0, m.ty0, target) || !inside(m.tx1, m.ty1, target))
                    throw InvalidArgument("fixed line outside the output image");
                if (std::hypot(m.tx1 - m.tx0, m.ty1 - m.ty0) < 1.0)
                    throw InvalidArgument("fixed line shorter than one pixel");
            }
        } else {
            if (m.x1 <= m.x0 || m.y1 <= m.y0) throw InvalidArgument("empty model region");
            if (!(m.scale > 0)) throw InvalidArgument("region scale must be positive");
        }
    }
    for (const HardRegion& h : a.hard) {
        const Rect& r = h.source;
        if (r.empty() || r.x0 < 0 || r.y0 < 0 || r.x1 > source.width || r.y1 > source.height)
            throw InvalidArgument("hard region outside the source image");
        if (r.x0 + h.offset.x < 0 || r.y0 + h.offset.y < 0 || r.x1 + h.offset.x > target.width ||
            r.y1 + h.offset.y > target.height)
            throw InvalidArgument("moved hard region leaves the output image");
    }
}

}  // namespace pm
