#include "cortifield/volume.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cortifield/errors.hpp"

namespace cf {

void Volume::validate() const {
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, errc::invalid_argument, "volume dims must be positive");
    require(spacing.x > 0 && spacing.y > 0 && spacing.z > 0, errc::invalid_argument,
            "volume spacing must be positive");
    require(static_cast<int64_t>(data.size()) == size(), errc::invalid_argument,
            "volume data length does not match dims");
    require(affine.invertible(), errc::invalid_argument, "volume affine is singular");
}

float Volume::sample_trilinear(const Vec3& vc) const {
    const double x = vc.x, y = vc.y, z = vc.z;
    if (x < -1.0 || y < -1.0 || z < -1.0 || x > dims[0] || y > dims[1] || z > dims[2]) return 0.0f;
    const int i0 = static_cast<int>(std::floor(x));
    const int j0 = static_cast<int>(std::floor(y));
    const int k0 = static_cast<int>(std::floor(z));
    const double fx = x - i0, fy = y - j0, fz = z - k0;
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk) {
        const int k = k0 + dk;
        if (k < 0 || k >= dims[2]) continue;
        const double wz = dk ? fz : 1.0 - fz;
        for (int dj = 0; dj < 2; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= dims[1]) continue;
            const double wy = dj ? fy : 1.0 - fy;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= dims[0]) continue;
                const double wx = di ? fx : 1.0 - fx;
                acc += wx * wy * wz * at(i, j, k);
            }
        }
    }
    return static_cast<float>(acc);
}

Volume make_volume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin) {
    Volume v;
    v.dims = dims;
    v.spacing = spacing;
    v.affine = Affine::scaling(spacing);
    v.affine.at(0, 3) = origin.x;
    v.affine.at(1, 3) = origin.y;
    v.affine.at(2, 3) = origin.z;
    v.data.assign(static_cast<size_t>(v.size()), 0.0f);
    return v;
}

// --- CFVOL1 raw format ------------------------------------------------------

void save_raw(const Volume& v, const std::string& path) {
    v.validate();
    std::ofstream f(path, std::ios::binary);
    require(f.good(), errc::io_error, "cannot open for writing: " + path);
    char head[1024];
    int n = std::snprintf(head, sizeof(head), "CFVOL1 %d %d %d %.17g %.17g %.17g", v.dims[0], v.dims[1],
                          v.dims[2], v.spacing.x, v.spacing.y, v.spacing.z);
    std::string line(head, static_cast<size_t>(n));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            n = std::snprintf(head, sizeof(head), " %.17g", v.affine.at(r, c));
            line.append(head, static_cast<size_t>(n));
        }
    line.push_back('\n');
    f.write(line.data(), static_cast<std::streamsize>(line.size()));
    f.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    require(f.good(), errc::io_error, "write failed: " + path);
}

namespace {

Volume load_raw(std::ifstream& f, const std::string& path) {
    std::string line;
    std::getline(f, line);
    std::istringstream ss(line);
    std::string magic;
    Volume v;
    ss >> magic >> v.dims[0] >> v.dims[1] >> v.dims[2] >> v.spacing.x >> v.spacing.y >> v.spacing.z;
    require(static_cast<bool>(ss) && magic == "CFVOL1", errc::corrupt_header, "bad CFVOL1 header: " + path);
    v.affine = Affine::identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            double x;
            require(static_cast<bool>(ss >> x), errc::corrupt_header, "short CFVOL1 affine: " + path);
            v.affine.at(r, c) = x;
        }
    require(v.dims[0] > 0 && v.dims[1] > 0 && v.dims[2] > 0 && v.size() < (int64_t(1) << 33),
            errc::corrupt_header, "bad CFVOL1 dims: " + path);
    v.data.resize(static_cast<size_t>(v.size()));
    f.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    require(f.gcount() == static_cast<std::streamsize>(v.data.size() * sizeof(float)), errc::corrupt_header,
            "truncated CFVOL1 payload: " + path);
    v.validate();
    return v;
}

// --- minimal NIfTI-1 reader -------------------------------------------------
// 348-byte header, little- or big-endian autodetected via dim[0] in [1,7].

template <typename T>
T read_le(const unsigned char* p, bool swap) {
    T x;
    unsigned char b[sizeof(T)];
    if (swap)
        for (size_t i = 0; i < sizeof(T); ++i) b[i] = p[sizeof(T) - 1 - i];
    else
        std::memcpy(b, p, sizeof(T));
    std::memcpy(&x, b, sizeof(T));
    return x;
}

struct NiftiHeader {
    int16_t dim[8];
    int16_t datatype, bitpix;
    float pixdim[8];
    float vox_offset, scl_slope, scl_inter;
    int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow[3][4];
    char magic[4];
};

NiftiHeader parse_nifti_header(const unsigned char* h, bool swap) {
    NiftiHeader n{};
    for (int i = 0; i < 8; ++i) n.dim[i] = read_le<int16_t>(h + 40 + 2 * i, swap);
    n.datatype = read_le<int16_t>(h + 70, swap);
    n.bitpix = read_le<int16_t>(h + 72, swap);
    for (int i = 0; i < 8; ++i) n.pixdim[i] = read_le<float>(h + 76 + 4 * i, swap);
    n.vox_offset = read_le<float>(h + 108, swap);
    n.scl_slope = read_le<float>(h + 112, swap);
    n.scl_inter = read_le<float>(h + 116, swap);
    n.qform_code = read_le<int16_t>(h + 252, swap);
    n.sform_code = read_le<int16_t>(h + 254, swap);
    n.quatern_b = read_le<float>(h + 256, swap);
    n.quatern_c = read_le<float>(h + 260, swap);
    n.quatern_d = read_le<float>(h + 264, swap);
    n.qoffset_x = read_le<float>(h + 268, swap);
    n.qoffset_y = read_le<float>(h + 272, swap);
    n.qoffset_z = read_le<float>(h + 276, swap);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) n.srow[r][c] = read_le<float>(h + 280 + 16 * r + 4 * c, swap);
    std::memcpy(n.magic, h + 344, 4);
    return n;
}

Affine affine_from_qform(const NiftiHeader& n) {
    const double b = n.quatern_b, c = n.quatern_c, d = n.quatern_d;
    double a2 = 1.0 - (b * b + c * c + d * d);
    const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
    const double qfac = n.pixdim[0] < 0.0f ? -1.0 : 1.0;
    const double sx = n.pixdim[1], sy = n.pixdim[2], sz = n.pixdim[3] * qfac;
    Affine t;
    t.at(0, 0) = (a * a + b * b - c * c - d * d) * sx;
    t.at(0, 1) = 2 * (b * c - a * d) * sy;
    t.at(0, 2) = 2 * (b * d + a * c) * sz;
    t.at(1, 0) = 2 * (b * c + a * d) * sx;
    t.at(1, 1) = (a * a + c * c - b * b - d * d) * sy;
    t.at(1, 2) = 2 * (c * d - a * b) * sz;
    t.at(2, 0) = 2 * (b * d - a * c) * sx;
    t.at(2, 1) = 2 * (c * d + a * b) * sy;
    t.at(2, 2) = (a * a + d * d - b * b - c * c) * sz;
    t.at(0, 3) = n.qoffset_x;
    t.at(1, 3) = n.qoffset_y;
    t.at(2, 3) = n.qoffset_z;
    return t;
}

Volume load_nifti(std::ifstream& f, const std::string& path) {
    unsigned char h[348];
    f.seekg(0);
    f.read(reinterpret_cast<char*>(h), 348);
    require(f.gcount() == 348, errc::corrupt_header, "truncated NIfTI header: " + path);

    const int16_t dim0_raw = read_le<int16_t>(h + 40, false);
    const bool swap = !(dim0_raw >= 1 && dim0_raw <= 7);
    const int32_t sizeof_hdr = read_le<int32_t>(h + 0, swap);
    require(sizeof_hdr == 348, errc::corrupt_header, "sizeof_hdr != 348: " + path);
    const NiftiHeader n = parse_nifti_header(h, swap);
    require(n.dim[0] >= 1 && n.dim[0] <= 7, errc::corrupt_header, "bad dim[0]: " + path);
    require(std::memcmp(n.magic, "n+1", 3) == 0 || std::memcmp(n.magic, "ni1", 3) == 0, errc::corrupt_header,
            "bad NIfTI magic: " + path);
    require(std::memcmp(n.magic, "n+1", 3) == 0, errc::unsupported_dtype,
            "detached .img files are not supported: " + path);
    require(n.dim[0] >= 3, errc::corrupt_header, "need a 3D image: " + path);
    for (int i = 4; i <= n.dim[0]; ++i)
        require(n.dim[i] <= 1, errc::unsupported_dtype, "4D+ images are not supported: " + path);

    Volume v;
    v.dims = {n.dim[1], n.dim[2], n.dim[3]};
    require(v.size() > 0 && v.size() < (int64_t(1) << 33), errc::corrupt_header, "bad dims: " + path);
    v.spacing = {std::fabs(n.pixdim[1]), std::fabs(n.pixdim[2]), std::fabs(n.pixdim[3])};
    if (v.spacing.x <= 0) v.spacing.x = 1.0;
    if (v.spacing.y <= 0) v.spacing.y = 1.0;
    if (v.spacing.z <= 0) v.spacing.z = 1.0;

    if (n.sform_code > 0) {
        v.affine = Affine::identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) v.affine.at(r, c) = n.srow[r][c];
    } else if (n.qform_code > 0) {
        v.affine = affine_from_qform(n);
    } else {
        v.affine = Affine::scaling(v.spacing);
    }
    require(v.affine.invertible(), errc::corrupt_header, "singular NIfTI affine: " + path);

    const int64_t count = v.size();
    const std::streamoff off = static_cast<std::streamoff>(n.vox_offset > 0 ? n.vox_offset : 352.0f);
    f.seekg(off);
    std::vector<unsigned char> raw;
    int elem = 0;
    switch (n.datatype) {
        case 2: elem = 1; break;   // uint8
        case 4: elem = 2; break;   // int16
        case 16: elem = 4; break;  // float32
        default:
            raise(errc::unsupported_dtype, "NIfTI datatype " + std::to_string(n.datatype) +
                                               " not supported (uint8/int16/float32 only): " + path);
    }
    raw.resize(static_cast<size_t>(count) * elem);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(f.gcount() == static_cast<std::streamsize>(raw.size()), errc::corrupt_header,
            "truncated NIfTI payload: " + path);

    v.data.resize(static_cast<size_t>(count));
    const bool scale = n.scl_slope != 0.0f;
    const float slope = scale ? n.scl_slope : 1.0f;
    const float inter = scale ? n.scl_inter : 0.0f;
    for (int64_t i = 0; i < count; ++i) {
        float x = 0.0f;
        const unsigned char* p = raw.data() + static_cast<size_t>(i) * elem;
        if (n.datatype == 2)
            x = static_cast<float>(*p);
        else if (n.datatype == 4)
            x = static_cast<float>(read_le<int16_t>(p, swap));
        else
            x = read_le<float>(p, swap);
        v.data[static_cast<size_t>(i)] = slope * x + inter;
    }
    v.validate();
    return v;
}

} // namespace

Volume load_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), errc::io_error, "cannot open: " + path);
    char tag[6] = {0};
    f.read(tag, 6);
    require(f.gcount() > 0, errc::corrupt_header, "empty file: " + path);
    if (std::memcmp(tag, "CFVOL1", 6) == 0) {
        f.seekg(0);
        return load_raw(f, path);
    }
    return load_nifti(f, path);
}

Affine load_transform(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), errc::io_error, "cannot open: " + path);
    Affine t;
    for (int i = 0; i < 16; ++i)
        require(static_cast<bool>(f >> t.m[static_cast<size_t>(i)]), errc::parse_error,
                "transform file needs 16 numbers: " + path);
    require(t.m[12] == 0.0 && t.m[13] == 0.0 && t.m[14] == 0.0 && t.m[15] == 1.0, errc::parse_error,
            "last transform row must be 0 0 0 1: " + path);
    require(t.invertible(), errc::degenerate_transform, "singular transform: " + path);
    return t;
}

void save_transform(const Affine& t, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), errc::io_error, "cannot open for writing: " + path);
    char buf[64];
    for (int r = 0; r < 4; ++r) {
        std::string line;
        for (int c = 0; c < 4; ++c) {
            const int n = std::snprintf(buf, sizeof(buf), c ? " %.17g" : "%.17g", t.m[static_cast<size_t>(r) * 4 + c]);
            line.append(buf, static_cast<size_t>(n));
        }
        f << line << '\n';
    }
    require(f.good(), errc::io_error, "write failed: " + path);
}

Volume resample(const Volume& src, const Affine& world_to_world, std::array<int, 3> out_dims,
                Vec3 out_spacing, const Affine& out_affine) {
    src.validate();
    require(world_to_world.invertible(), errc::degenerate_transform, "resample transform is singular");
    Volume out;
    out.dims = out_dims;
    out.spacing = out_spacing;
    out.affine = out_affine;
    out.data.assign(static_cast<size_t>(out.size()), 0.0f);
    out.validate();
    // Compose once: output voxel index -> source voxel coordinates.
    const Affine to_src_voxel = src.affine.inverse() * world_to_world.inverse() * out_affine;
    const int nx = out.dims[0], ny = out.dims[1], nz = out.dims[2];
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                out.at(i, j, k) = src.sample_trilinear(to_src_voxel.apply({double(i), double(j), double(k)}));
    return out;
}

Volume resample_to_template(const Volume& native, const Affine& native_to_template,
                            const TemplateSpace& omega, int n) {
    require(n >= 2, errc::invalid_argument, "template grid needs n >= 2");
    const Vec3 ext = omega.bbox_max - omega.bbox_min;
    const Vec3 sp = ext / double(n - 1);
    Affine aff = Affine::scaling(sp);
    aff.at(0, 3) = omega.bbox_min.x;
    aff.at(1, 3) = omega.bbox_min.y;
    aff.at(2, 3) = omega.bbox_min.z;
    return resample(native, native_to_template, {n, n, n}, sp, aff);
}

} // namespace cf
