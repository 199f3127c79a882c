#include "lulc/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace lulc {

std::string encode_ppm(const ImageBuffer& img) {
    if (img.width < 1 || img.height < 1 || img.channels != 3)
        throw ParamError("PPM encoder needs a non-empty 3-channel image");
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

namespace {

// Skips whitespace and '#' comment lines between PPM header tokens.
std::size_t skip_ppm_space(const std::string& s, std::size_t pos) {
    while (pos < s.size()) {
        if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    return pos;
}

long read_ppm_int(const std::string& s, std::size_t& pos, const char* what) {
    pos = skip_ppm_space(s, pos);
    std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == start) throw FormatError(std::string("PPM: missing ") + what);
    return std::stol(s.substr(start, pos - start));
}

}  // namespace

ImageBuffer decode_ppm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw FormatError("PPM: not a P6 file");
    std::size_t pos = 2;
    long w = read_ppm_int(bytes, pos, "width");
    long h = read_ppm_int(bytes, pos, "height");
    long maxval = read_ppm_int(bytes, pos, "maxval");
    if (w < 1 || h < 1) throw FormatError("PPM: bad dimensions");
    if (maxval != 255) throw FormatError("PPM: only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw FormatError("PPM: missing separator before pixel data");
    ++pos;  // exactly one whitespace byte before the raster
    std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (bytes.size() - pos < need) throw FormatError("PPM: truncated pixel data");
    ImageBuffer img(static_cast<int>(w), static_cast<int>(h));
    std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data()) + pos, need,
                img.pixels.begin());
    return img;
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return decode_ppm(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

void write_ppm(const ImageBuffer& img, const std::filesystem::path& path) {
    atomic_write_file(path, encode_ppm(img));
}

}  // namespace lulc
