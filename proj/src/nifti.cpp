#include "fsyn/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace fsyn {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kSingleFileOffset = 352;

// Byte offsets of the NIfTI-1 header fields.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
} // namespace off

template <class T>
T byteswap_value(T v) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

class HeaderReader {
  public:
    HeaderReader(const std::string &bytes, bool swapped) : bytes_(bytes), swapped_(swapped) {}

    template <class T>
    T get(std::size_t offset) const {
        T v;
        std::memcpy(&v, bytes_.data() + offset, sizeof(T));
        return swapped_ ? byteswap_value(v) : v;
    }

  private:
    const std::string &bytes_;
    bool swapped_;
};

template <class T>
void put(std::string &buf, std::size_t offset, T v) {
    std::memcpy(buf.data() + offset, &v, sizeof(T));
}

int bitpix_for(std::int16_t datatype) {
    switch (datatype) {
    case nifti_dt::kUint8:
    case nifti_dt::kInt8: return 8;
    case nifti_dt::kInt16:
    case nifti_dt::kUint16: return 16;
    case nifti_dt::kInt32:
    case nifti_dt::kUint32:
    case nifti_dt::kFloat32: return 32;
    case nifti_dt::kFloat64:
    case nifti_dt::kInt64:
    case nifti_dt::kUint64: return 64;
    default: return 0;
    }
}

template <class T>
void decode_payload(const char *src, std::size_t count, bool swapped, double slope, double inter, bool scale,
                    std::vector<float> &out) {
    for (std::size_t n = 0; n < count; ++n) {
        T raw;
        std::memcpy(&raw, src + n * sizeof(T), sizeof(T));
        if (swapped) raw = byteswap_value(raw);
        out[n] = scale ? static_cast<float>(static_cast<double>(raw) * slope + inter) : static_cast<float>(raw);
    }
}

std::string read_all(const std::filesystem::path &path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw NiftiIoError("cannot open " + path.string() + " for reading");
    std::string bytes;
    std::array<char, 1 << 16> chunk;
    for (;;) {
        const int got = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
        if (got < 0) {
            int errnum = 0;
            std::string msg = gzerror(f, &errnum);
            gzclose(f);
            throw NiftiParseError("payload", "decompression failed for " + path.string() + ": " + msg);
        }
        if (got == 0) break;
        bytes.append(chunk.data(), static_cast<std::size_t>(got));
    }
    gzclose(f);
    return bytes;
}

void write_all(const std::string &bytes, const std::filesystem::path &path) {
    if (path.extension() == ".gz") {
        gzFile f = gzopen(path.string().c_str(), "wb6");
        if (f == nullptr) throw NiftiIoError("cannot open " + path.string() + " for writing");
        const int wrote = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        const int closed = gzclose(f);
        if (wrote != static_cast<int>(bytes.size()) || closed != Z_OK) {
            throw NiftiIoError("failed writing " + path.string());
        }
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw NiftiIoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw NiftiIoError("failed writing " + path.string());
}

struct QuaternionForm {
    float b, c, d, qfac;
    std::array<float, 3> offset;
    std::array<float, 3> pixdim;
};

QuaternionForm affine_to_quaternion(const Affine &a) {
    Eigen::Matrix3d m = a.topLeftCorner<3, 3>();
    QuaternionForm q{};
    for (int d = 0; d < 3; ++d) {
        q.offset[d] = static_cast<float>(a(d, 3));
        const double norm = m.col(d).norm();
        q.pixdim[d] = static_cast<float>(norm);
        if (norm > 0) m.col(d) /= norm;
    }
    // Nearest orthogonal matrix.
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    q.qfac = 1.0f;
    if (r.determinant() < 0) {
        q.qfac = -1.0f;
        r.col(2) = -r.col(2);
    }
    Eigen::Quaterniond quat(r);
    quat.normalize();
    if (quat.w() < 0) quat.coeffs() = -quat.coeffs();
    q.b = static_cast<float>(quat.x());
    q.c = static_cast<float>(quat.y());
    q.d = static_cast<float>(quat.z());
    return q;
}

} // namespace

Affine qform_to_affine(float qb, float qc, float qd, const std::array<float, 3> &offset,
                       const std::array<float, 3> &pixdim, float qfac) {
    const double b = qb, c = qc, d = qd;
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    Eigen::Matrix3d r;
    r << a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c, //
        2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b,  //
        2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b;
    Affine out = Affine::Identity();
    const double sign = qfac < 0 ? -1.0 : 1.0;
    for (int col = 0; col < 3; ++col) {
        double s = pixdim[col] > 0 ? pixdim[col] : 1.0;
        if (col == 2) s *= sign;
        out.block<3, 1>(0, col) = r.col(col) * s;
    }
    for (int d2 = 0; d2 < 3; ++d2) out(d2, 3) = offset[d2];
    return out;
}

bool is_nifti_path(const std::filesystem::path &path) {
    const std::string name = path.filename().string();
    return name.ends_with(".nii") || name.ends_with(".nii.gz");
}

std::string nifti_stem(const std::filesystem::path &path) {
    std::string name = path.filename().string();
    if (name.ends_with(".gz")) name.resize(name.size() - 3);
    if (name.ends_with(".nii")) name.resize(name.size() - 4);
    return name;
}

VoxelGrid decode_nifti(const std::string &bytes, NiftiMeta *meta_out) {
    if (bytes.size() < kHeaderSize) {
        throw NiftiParseError("sizeof_hdr", "file holds " + std::to_string(bytes.size()) +
                                                " bytes, fewer than the 348-byte NIfTI-1 header");
    }
    NiftiMeta meta;
    std::int32_t sizeof_hdr;
    std::memcpy(&sizeof_hdr, bytes.data() + off::sizeof_hdr, 4);
    if (sizeof_hdr != 348) {
        if (byteswap_value(sizeof_hdr) == 348) {
            meta.byte_swapped = true;
        } else {
            throw NiftiParseError("sizeof_hdr", "expected 348, found " + std::to_string(sizeof_hdr));
        }
    }
    const char *magic = bytes.data() + off::magic;
    if (std::memcmp(magic, "ni1\0", 4) == 0) {
        throw NiftiParseError("magic", "two-file (.hdr/.img) NIfTI is not supported");
    }
    if (std::memcmp(magic, "n+1\0", 4) != 0) throw NiftiParseError("magic", "not a NIfTI-1 file");

    const HeaderReader h(bytes, meta.byte_swapped);
    for (int d = 0; d < 8; ++d) {
        meta.dim[d] = h.get<std::int16_t>(off::dim + 2 * d);
        meta.pixdim[d] = h.get<float>(off::pixdim + 4 * d);
    }
    meta.datatype = h.get<std::int16_t>(off::datatype);
    meta.bitpix = h.get<std::int16_t>(off::bitpix);
    meta.vox_offset = h.get<float>(off::vox_offset);
    meta.scl_slope = h.get<float>(off::scl_slope);
    meta.scl_inter = h.get<float>(off::scl_inter);
    meta.qform_code = h.get<std::int16_t>(off::qform_code);
    meta.sform_code = h.get<std::int16_t>(off::sform_code);

    const int ndim = meta.dim[0];
    if (ndim < 1 || ndim > 7) throw NiftiParseError("dim", "dim[0] must be in 1..7, found " + std::to_string(ndim));
    Shape shape{1, 1, 1};
    for (int d = 1; d <= ndim; ++d) {
        if (meta.dim[d] < 1) throw NiftiParseError("dim", "dim[" + std::to_string(d) + "] must be >= 1");
        if (d <= 3) {
            shape[d - 1] = meta.dim[d];
        } else if (meta.dim[d] != 1) {
            throw NiftiParseError("dim", "only single 3-D volumes are supported");
        }
    }

    const int bitpix = bitpix_for(meta.datatype);
    if (bitpix == 0) throw NiftiParseError("datatype", "unsupported datatype code " + std::to_string(meta.datatype));

    Spacing spacing{1.0, 1.0, 1.0};
    for (int d = 0; d < 3; ++d) {
        const double p = std::abs(static_cast<double>(meta.pixdim[d + 1]));
        if (d < ndim) {
            if (!(p > 0.0) || !std::isfinite(p)) {
                throw NiftiParseError("pixdim", "pixdim[" + std::to_string(d + 1) + "] must be positive");
            }
            spacing[d] = p;
        }
    }

    const float qfac = meta.pixdim[0] < 0 ? -1.0f : 1.0f;
    meta.qform = qform_to_affine(h.get<float>(off::quatern_b), h.get<float>(off::quatern_b + 4),
                                 h.get<float>(off::quatern_b + 8),
                                 {h.get<float>(off::qoffset_x), h.get<float>(off::qoffset_x + 4),
                                  h.get<float>(off::qoffset_x + 8)},
                                 {static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                                  static_cast<float>(spacing[2])},
                                 qfac);
    meta.sform = Affine::Identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) meta.sform(r, c) = h.get<float>(off::srow_x + 16 * r + 4 * c);

    Affine affine;
    if (meta.sform_code > 0) {
        affine = meta.sform;
    } else if (meta.qform_code > 0) {
        affine = meta.qform;
    } else {
        affine = scaling_affine(spacing);
    }

    const std::size_t count = static_cast<std::size_t>(shape[0] * shape[1] * shape[2]);
    const auto offset = static_cast<std::size_t>(meta.vox_offset);
    if (meta.vox_offset < float(kHeaderSize) || offset > bytes.size()) {
        throw NiftiParseError("vox_offset", "invalid payload offset " + std::to_string(meta.vox_offset));
    }
    const std::size_t need = count * static_cast<std::size_t>(bitpix / 8);
    if (bytes.size() - offset < need) {
        throw NiftiParseError("payload", "truncated: expected " + std::to_string(need) + " bytes, found " +
                                             std::to_string(bytes.size() - offset));
    }

    const bool scale = meta.scl_slope != 0.0f && std::isfinite(meta.scl_slope) &&
                       !(meta.scl_slope == 1.0f && meta.scl_inter == 0.0f);
    const double slope = meta.scl_slope;
    const double inter = std::isfinite(meta.scl_inter) ? meta.scl_inter : 0.0;
    std::vector<float> data(count);
    const char *src = bytes.data() + offset;
    const bool sw = meta.byte_swapped;
    switch (meta.datatype) {
    case nifti_dt::kUint8: decode_payload<std::uint8_t>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kInt8: decode_payload<std::int8_t>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kInt16: decode_payload<std::int16_t>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kUint16: decode_payload<std::uint16_t>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kInt32: decode_payload<std::int32_t>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kUint32: decode_payload<std::uint32_t>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kFloat32: decode_payload<float>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kFloat64: decode_payload<double>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kInt64: decode_payload<std::int64_t>(src, count, sw, slope, inter, scale, data); break;
    case nifti_dt::kUint64: decode_payload<std::uint64_t>(src, count, sw, slope, inter, scale, data); break;
    default: break;
    }

    if (meta_out != nullptr) *meta_out = meta;
    try {
        return VoxelGrid(Geometry(shape, spacing, affine), std::move(data));
    } catch (const InvalidArgument &e) {
        throw NiftiParseError("srow", e.what());
    }
}

VoxelGrid read_nifti(const std::filesystem::path &path, NiftiMeta *meta) {
    const std::string bytes = read_all(path);
    try {
        return decode_nifti(bytes, meta);
    } catch (const NiftiParseError &e) {
        throw NiftiParseError(e.field(), std::string(e.what()).substr(e.field().size() + 2) + " (" +
                                             path.string() + ")");
    }
}

LabelMap read_nifti_labels(const std::filesystem::path &path, NiftiMeta *meta) {
    const VoxelGrid v = read_nifti(path, meta);
    try {
        return to_labels(v);
    } catch (const InvalidInput &e) {
        throw InvalidInput(std::string(e.what()) + " in " + path.string());
    }
}

namespace {

std::string encode(const Geometry &g, std::int16_t datatype, const char *payload, std::size_t payload_bytes) {
    std::string buf(kSingleFileOffset + payload_bytes, '\0');
    put<std::int32_t>(buf, off::sizeof_hdr, 348);
    put<std::int16_t>(buf, off::dim, 3);
    for (int d = 0; d < 3; ++d) {
        if (g.shape[d] > 32767) throw InvalidArgument("NIfTI-1 dimensions are limited to 32767");
        put<std::int16_t>(buf, off::dim + 2 * (d + 1), static_cast<std::int16_t>(g.shape[d]));
    }
    for (int d = 4; d < 8; ++d) put<std::int16_t>(buf, off::dim + 2 * d, 1);
    put<std::int16_t>(buf, off::datatype, datatype);
    put<std::int16_t>(buf, off::bitpix, static_cast<std::int16_t>(bitpix_for(datatype)));

    const QuaternionForm q = affine_to_quaternion(g.affine);
    put<float>(buf, off::pixdim, q.qfac);
    for (int d = 0; d < 3; ++d) put<float>(buf, off::pixdim + 4 * (d + 1), static_cast<float>(g.spacing[d]));
    put<float>(buf, off::vox_offset, static_cast<float>(kSingleFileOffset));
    put<float>(buf, off::scl_slope, 1.0f);
    put<float>(buf, off::scl_inter, 0.0f);
    buf[off::xyzt_units] = 2; // mm
    const char descrip[] = "fsyn";
    std::memcpy(buf.data() + off::descrip, descrip, sizeof(descrip));
    put<std::int16_t>(buf, off::qform_code, 1);
    put<std::int16_t>(buf, off::sform_code, 1);
    put<float>(buf, off::quatern_b, q.b);
    put<float>(buf, off::quatern_b + 4, q.c);
    put<float>(buf, off::quatern_b + 8, q.d);
    for (int d = 0; d < 3; ++d) put<float>(buf, off::qoffset_x + 4 * d, q.offset[d]);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) put<float>(buf, off::srow_x + 16 * r + 4 * c, static_cast<float>(g.affine(r, c)));
    std::memcpy(buf.data() + off::magic, "n+1\0", 4);
    if (payload_bytes > 0) std::memcpy(buf.data() + kSingleFileOffset, payload, payload_bytes);
    return buf;
}

} // namespace

void write_nifti(const VoxelGrid &v, const std::filesystem::path &path, bool integer_labels) {
    if (integer_labels) {
        write_nifti(to_labels(v), path);
        return;
    }
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
    write_all(encode(v.geometry(), nifti_dt::kFloat32, reinterpret_cast<const char *>(v.data().data()),
                     v.size() * sizeof(float)),
              path);
}

void write_nifti(const LabelMap &v, const std::filesystem::path &path) {
    write_all(encode(v.geometry(), nifti_dt::kUint8, reinterpret_cast<const char *>(v.data().data()), v.size()),
              path);
}

} // namespace fsyn
