#include "cortifield/geom.hpp"

#include "cortifield/errors.hpp"

namespace cf {

Affine Affine::translation(const Vec3& t) {
    Affine a;
    a.at(0, 3) = t.x;
    a.at(1, 3) = t.y;
    a.at(2, 3) = t.z;
    return a;
}

Affine Affine::scaling(const Vec3& s) {
    Affine a;
    a.at(0, 0) = s.x;
    a.at(1, 1) = s.y;
    a.at(2, 2) = s.z;
    return a;
}

Affine Affine::rotation(const Vec3& axis, double angle) {
    const Vec3 u = axis.normalized();
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    Affine a;
    a.at(0, 0) = c + u.x * u.x * t;
    a.at(0, 1) = u.x * u.y * t - u.z * s;
    a.at(0, 2) = u.x * u.z * t + u.y * s;
    a.at(1, 0) = u.y * u.x * t + u.z * s;
    a.at(1, 1) = c + u.y * u.y * t;
    a.at(1, 2) = u.y * u.z * t - u.x * s;
    a.at(2, 0) = u.z * u.x * t - u.y * s;
    a.at(2, 1) = u.z * u.y * t + u.x * s;
    a.at(2, 2) = c + u.z * u.z * t;
    return a;
}

Affine Affine::from_linear(const std::array<double, 9>& L, const Vec3& t) {
    Affine a;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a.at(r, c) = L[static_cast<size_t>(r) * 3 + c];
    a.at(0, 3) = t.x;
    a.at(1, 3) = t.y;
    a.at(2, 3) = t.z;
    return a;
}

Affine Affine::operator*(const Affine& o) const {
    Affine r;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += at(i, k) * o.at(k, j);
            r.at(i, j) = acc;
        }
    }
    return r;
}

double Affine::det3() const {
    return at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
           at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
           at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
}

Affine Affine::inverse() const {
    const double d = det3();
    require(std::fabs(d) > 1e-300, errc::degenerate_transform, "singular linear part");
    const double inv = 1.0 / d;
    Affine r;
    // Adjugate of the upper-left 3x3.
    r.at(0, 0) = (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) * inv;
    r.at(0, 1) = (at(0, 2) * at(2, 1) - at(0, 1) * at(2, 2)) * inv;
    r.at(0, 2) = (at(0, 1) * at(1, 2) - at(0, 2) * at(1, 1)) * inv;
    r.at(1, 0) = (at(1, 2) * at(2, 0) - at(1, 0) * at(2, 2)) * inv;
    r.at(1, 1) = (at(0, 0) * at(2, 2) - at(0, 2) * at(2, 0)) * inv;
    r.at(1, 2) = (at(0, 2) * at(1, 0) - at(0, 0) * at(1, 2)) * inv;
    r.at(2, 0) = (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0)) * inv;
    r.at(2, 1) = (at(0, 1) * at(2, 0) - at(0, 0) * at(2, 1)) * inv;
    r.at(2, 2) = (at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0)) * inv;
    const Vec3 t{at(0, 3), at(1, 3), at(2, 3)};
    const Vec3 it = r.apply_vector(t);
    r.at(0, 3) = -it.x;
    r.at(1, 3) = -it.y;
    r.at(2, 3) = -it.z;
    return r;
}

const char* errc_name(errc c) {
    switch (c) {
        case errc::ok: return "ok";
        case errc::io_error: return "IoError";
        case errc::corrupt_header: return "CorruptHeader";
        case errc::unsupported_dtype: return "UnsupportedDtype";
        case errc::parse_error: return "ParseError";
        case errc::non_triangle_face: return "NonTriangleFace";
        case errc::not_closed: return "NotClosed";
        case errc::zero_area: return "ZeroArea";
        case errc::degenerate_transform: return "DegenerateTransform";
        case errc::no_overlap: return "NoOverlap";
        case errc::shape_mismatch: return "ShapeMismatch";
        case errc::representation_mismatch: return "RepresentationMismatch";
        case errc::version_mismatch: return "VersionMismatch";
        case errc::corrupt_checkpoint: return "CorruptCheckpoint";
        case errc::no_surface: return "NoSurface";
        case errc::empty_mesh: return "EmptyMesh";
        case errc::dims_mismatch: return "DimsMismatch";
        case errc::degenerate_after_fallbacks: return "DegenerateAfterFallbacks";
        case errc::self_intersecting_inner: return "SelfIntersectingInner";
        case errc::invalid_argument: return "InvalidArgument";
        case errc::numeric_error: return "NumericError";
    }
    return "UnknownError";
}

} // namespace cf
