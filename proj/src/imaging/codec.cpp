#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "skycast/error.hpp"
#include "skycast/imaging.hpp"

namespace skycast::imaging {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

bool is_png(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

RasterImage from_bytes(int w, int h, int c, const std::uint8_t* data) {
    RasterImage img(w, h, c);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = data[i] / 255.0;
    return img;
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw Error(ErrorCode::MalformedImage, std::string("png header: ") + image.message);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw Error(ErrorCode::MalformedImage, "png has zero dimension");
    }
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorCode::MalformedImage, "png data: " + msg);
    }
    return from_bytes(static_cast<int>(image.width), static_cast<int>(image.height), channels, buffer.data());
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Corrupt-data warnings (level -1), e.g. a truncated stream, are fatal.
void jpeg_emit_message(j_common_ptr cinfo, int msg_level) {
    if (msg_level < 0) jpeg_error_exit(cinfo);
}

struct JpegState {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    std::vector<std::uint8_t> buffer;
    int width = 0;
    int height = 0;
    int channels = 0;
};

// Returns false on a libjpeg error; `state` is only accessed through the pointer.
bool run_jpeg_decode(JpegState* state, std::span<const std::uint8_t> bytes) {
    state->cinfo.err = jpeg_std_error(&state->err.base);
    state->err.base.error_exit = jpeg_error_exit;
    state->err.base.emit_message = jpeg_emit_message;
    state->err.message[0] = '\0';
    if (setjmp(state->err.jump)) {
        jpeg_destroy_decompress(&state->cinfo);
        return false;
    }
    jpeg_create_decompress(&state->cinfo);
    jpeg_mem_src(&state->cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&state->cinfo, TRUE);
    state->cinfo.out_color_space = state->cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&state->cinfo);
    state->width = static_cast<int>(state->cinfo.output_width);
    state->height = static_cast<int>(state->cinfo.output_height);
    state->channels = state->cinfo.output_components;
    state->buffer.resize(static_cast<std::size_t>(state->width) * state->height * state->channels);
    const std::size_t stride = static_cast<std::size_t>(state->width) * state->channels;
    while (state->cinfo.output_scanline < state->cinfo.output_height) {
        JSAMPROW row = state->buffer.data() + state->cinfo.output_scanline * stride;
        jpeg_read_scanlines(&state->cinfo, &row, 1);
    }
    jpeg_finish_decompress(&state->cinfo);
    jpeg_destroy_decompress(&state->cinfo);
    return true;
}

RasterImage decode_jpeg(std::span<const std::uint8_t> bytes) {
    auto state = std::make_unique<JpegState>();
    if (!run_jpeg_decode(state.get(), bytes)) {
        throw Error(ErrorCode::MalformedImage, std::string("jpeg: ") + state->err.message);
    }
    if (state->width == 0 || state->height == 0) throw Error(ErrorCode::MalformedImage, "jpeg has zero dimension");
    return from_bytes(state->width, state->height, state->channels, state->buffer.data());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

std::uint8_t quantize(double v) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

RasterImage decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw Error(ErrorCode::MalformedImage, "empty input");
    if (is_png(bytes)) return decode_png(bytes);
    if (is_jpeg(bytes)) return decode_jpeg(bytes);
    throw Error(ErrorCode::UnsupportedFormat, "not a PNG or JPEG stream");
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
    img.validate();
    std::vector<std::uint8_t> raw(img.pixels.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize(img.pixels[i]);

    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, raw.data(), 0, nullptr)) {
        throw Error(ErrorCode::IoError, std::string("png size query: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, raw.data(), 0, nullptr)) {
        throw Error(ErrorCode::IoError, std::string("png encode: ") + image.message);
    }
    out.resize(size);
    return out;
}

RasterImage load_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return decode_image(bytes);
}

void save_png(const RasterImage& img, const std::filesystem::path& path) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

SkyMask mask_from_image(const RasterImage& img) {
    SkyMask mask(img.width, img.height, false);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            bool any = false;
            for (int c = 0; c < img.channels; ++c) any = any || img.at(x, y, c) > 0.0;
            mask.set(x, y, any);
        }
    }
    return mask;
}

SkyMask load_mask(const std::filesystem::path& path) { return mask_from_image(load_image(path)); }

} // namespace skycast::imaging
