// OBJ (v/f records) and OFF readers/writers. Zero-area faces are dropped at
// load and counted in LoadStats rather than treated as errors.
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cortifield/errors.hpp"
#include "cortifield/mesh.hpp"

namespace cf {

namespace {

bool face_degenerate(const TriangleMesh& m, const std::array<int, 3>& f) {
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) return true;
    const Vec3 a = m.vertices[static_cast<size_t>(f[0])];
    const Vec3 b = m.vertices[static_cast<size_t>(f[1])];
    const Vec3 c = m.vertices[static_cast<size_t>(f[2])];
    return (b - a).cross(c - a).norm2() == 0.0;
}

void push_face(TriangleMesh& m, std::array<int, 3> f, LoadStats* stats, const std::string& path) {
    const int nv = static_cast<int>(m.vertices.size());
    for (int c = 0; c < 3; ++c)
        require(f[static_cast<size_t>(c)] >= 0 && f[static_cast<size_t>(c)] < nv, errc::parse_error,
                "face index out of range in " + path);
    if (face_degenerate(m, f)) {
        if (stats) ++stats->dropped_degenerate_faces;
        return;
    }
    m.faces.push_back(f);
}

// Accepts "3", "3/1", "3/1/2", "3//2"; OBJ indices are 1-based.
int parse_obj_index(const std::string& token, const std::string& path) {
    size_t slash = token.find('/');
    const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
    try {
        const int idx = std::stoi(head);
        require(idx != 0, errc::parse_error, "OBJ index 0 in " + path);
        return idx;
    } catch (const error&) {
        throw;
    } catch (...) {
        raise(errc::parse_error, "bad OBJ face token '" + token + "' in " + path);
    }
}

TriangleMesh load_obj(std::istream& in, LoadStats* stats, const std::string& path) {
    TriangleMesh m;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag.empty() || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            require(static_cast<bool>(ss >> p.x >> p.y >> p.z), errc::parse_error,
                    "bad OBJ vertex in " + path);
            m.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) idx.push_back(parse_obj_index(tok, path));
            require(idx.size() >= 3, errc::parse_error, "OBJ face with < 3 vertices in " + path);
            require(idx.size() == 3, errc::non_triangle_face,
                    "OBJ face with " + std::to_string(idx.size()) + " vertices in " + path);
            std::array<int, 3> f{};
            for (int c = 0; c < 3; ++c) {
                int v = idx[static_cast<size_t>(c)];
                if (v < 0) v = static_cast<int>(m.vertices.size()) + v; // negative = relative
                else v -= 1;
                f[static_cast<size_t>(c)] = v;
            }
            push_face(m, f, stats, path);
        }
        // other record types (vn, vt, o, g, s, usemtl, ...) are ignored
    }
    return m;
}

TriangleMesh load_off(std::istream& in, LoadStats* stats, const std::string& path) {
    auto next_content_line = [&](std::string& line) {
        while (std::getline(in, line)) {
            size_t pos = line.find_first_not_of(" \t\r");
            if (pos == std::string::npos || line[pos] == '#') continue;
            return true;
        }
        return false;
    };
    std::string line;
    require(next_content_line(line), errc::parse_error, "empty OFF file: " + path);
    {
        std::istringstream ss(line);
        std::string magic;
        ss >> magic;
        require(magic == "OFF", errc::parse_error, "missing OFF header in " + path);
    }
    require(next_content_line(line), errc::parse_error, "missing OFF counts in " + path);
    int64_t nv = 0, nf = 0, ne = 0;
    {
        std::istringstream ss(line);
        require(static_cast<bool>(ss >> nv >> nf >> ne), errc::parse_error, "bad OFF counts in " + path);
    }
    require(nv >= 0 && nf >= 0, errc::parse_error, "negative OFF counts in " + path);
    TriangleMesh m;
    m.vertices.reserve(static_cast<size_t>(nv));
    for (int64_t i = 0; i < nv; ++i) {
        require(next_content_line(line), errc::parse_error, "truncated OFF vertices in " + path);
        std::istringstream ss(line);
        Vec3 p;
        require(static_cast<bool>(ss >> p.x >> p.y >> p.z), errc::parse_error, "bad OFF vertex in " + path);
        m.vertices.push_back(p);
    }
    for (int64_t i = 0; i < nf; ++i) {
        require(next_content_line(line), errc::parse_error, "truncated OFF faces in " + path);
        std::istringstream ss(line);
        int count = 0;
        require(static_cast<bool>(ss >> count), errc::parse_error, "bad OFF face in " + path);
        require(count == 3, errc::non_triangle_face,
                "OFF face with " + std::to_string(count) + " vertices in " + path);
        std::array<int, 3> f{};
        require(static_cast<bool>(ss >> f[0] >> f[1] >> f[2]), errc::parse_error, "bad OFF face in " + path);
        push_face(m, f, stats, path);
    }
    return m;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

TriangleMesh load_mesh(const std::string& path, LoadStats* stats) {
    std::ifstream f(path);
    require(f.good(), errc::io_error, "cannot open: " + path);
    LoadStats local;
    if (!stats) stats = &local;
    TriangleMesh m;
    if (ends_with(path, ".off") || ends_with(path, ".OFF")) {
        m = load_off(f, stats, path);
    } else {
        // Peek: OFF content is accepted regardless of extension.
        std::string first;
        f >> first;
        f.seekg(0);
        m = (first == "OFF") ? load_off(f, stats, path) : load_obj(f, stats, path);
    }
    m.validate();
    return m;
}

void save_mesh(const TriangleMesh& mesh, const std::string& path) {
    mesh.validate();
    std::ofstream f(path);
    require(f.good(), errc::io_error, "cannot open for writing: " + path);
    char buf[128];
    const bool off = ends_with(path, ".off") || ends_with(path, ".OFF");
    std::string out;
    out.reserve(mesh.vertices.size() * 48 + mesh.faces.size() * 24);
    if (off) {
        out += "OFF\n";
        std::snprintf(buf, sizeof(buf), "%zu %zu 0\n", mesh.vertices.size(), mesh.faces.size());
        out += buf;
    }
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), off ? "%.17g %.17g %.17g\n" : "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        out += buf;
    }
    for (const auto& face : mesh.faces) {
        if (off)
            std::snprintf(buf, sizeof(buf), "3 %d %d %d\n", face[0], face[1], face[2]);
        else
            std::snprintf(buf, sizeof(buf), "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
        out += buf;
    }
    f << out;
    require(f.good(), errc::io_error, "write failed: " + path);
}

} // namespace cf
