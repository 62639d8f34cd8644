#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "skycast/cnn.hpp"
#include "skycast/error.hpp"

namespace skycast::cnn {

// Layout:
//   SKYCAST-CNN v1\n
//   arch <text>\n
//   input <w> <h> <c>\n
//   weights <n>\n
//   <n little-endian float64>
//   checksum <crc32 of every preceding byte, 8 hex digits>\n

namespace {

std::uint32_t crc_of(std::string_view bytes) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string hex8(std::uint32_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s(8, '0');
    for (int i = 7; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    return s;
}

// Reads one '\n'-terminated line starting at pos.
std::string_view next_line(std::string_view bytes, std::size_t& pos, std::size_t line_no) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw Error(ErrorCode::ParseError, "truncated model header", line_no);
    const auto line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
}

std::string_view after_key(std::string_view line, std::string_view key, std::size_t line_no) {
    if (line.substr(0, key.size() + 1) != std::string(key) + " ") {
        throw Error(ErrorCode::ParseError, "expected '" + std::string(key) + "' line", line_no);
    }
    return line.substr(key.size() + 1);
}

} // namespace

std::string serialize(const CnnModel& model) {
    const Shape in = model.input_shape();
    std::string out;
    out += std::string(kCnnMagic) + "\n";
    out += "arch " + model.arch() + "\n";
    out += "input " + std::to_string(in.width) + " " + std::to_string(in.height) + " " + std::to_string(in.channels) + "\n";
    out += "weights " + std::to_string(model.parameter_count()) + "\n";
    for (double w : model.weights()) {
        auto bits = std::bit_cast<std::uint64_t>(w);
        for (int b = 0; b < 8; ++b, bits >>= 8) out.push_back(static_cast<char>(bits & 0xFF));
    }
    out += "checksum " + hex8(crc_of(out)) + "\n";
    return out;
}

CnnModel deserialize_cnn(std::string_view bytes) {
    std::size_t pos = 0;
    if (next_line(bytes, pos, 1) != kCnnMagic) throw Error(ErrorCode::ParseError, "expected header 'SKYCAST-CNN v1'", 1);
    const std::string arch(after_key(next_line(bytes, pos, 2), "arch", 2));

    Shape in;
    {
        std::istringstream ss(std::string(after_key(next_line(bytes, pos, 3), "input", 3)));
        if (!(ss >> in.width >> in.height >> in.channels)) throw Error(ErrorCode::ParseError, "bad input line", 3);
    }
    std::size_t n = 0;
    {
        std::istringstream ss(std::string(after_key(next_line(bytes, pos, 4), "weights", 4)));
        if (!(ss >> n)) throw Error(ErrorCode::ParseError, "bad weights line", 4);
    }
    if (n > (bytes.size() - pos) / 8) throw Error(ErrorCode::ParseError, "weight block is truncated", 5);
    std::vector<double> weights(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[pos + k * 8 + static_cast<std::size_t>(b)]);
        weights[k] = std::bit_cast<double>(bits);
    }
    const std::size_t payload_end = pos + n * 8;
    pos = payload_end;
    const auto stored = after_key(next_line(bytes, pos, 5), "checksum", 5);
    if (stored != hex8(crc_of(bytes.substr(0, payload_end)))) throw Error(ErrorCode::ParseError, "checksum mismatch", 5);
    return CnnModel::from_parts(arch, in, std::move(weights));
}

void save_model(const CnnModel& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << serialize(model);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

} // namespace skycast::cnn
