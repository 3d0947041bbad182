#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

// jpeglib.h needs size_t and FILE declared beforehand.
#include <jpeglib.h>

#include "domgap/error.hpp"
#include "domgap/image.hpp"

namespace domgap {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

inline bool is_png(const std::vector<unsigned char>& b) {
    static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

inline bool is_jpeg(const std::vector<unsigned char>& b) {
    return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

inline RgbImage decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw ParseError(name + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    if (img.width == 0 || img.height == 0) {
        png_image_free(&img);
        throw ParseError(name + ": empty PNG");
    }
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw ParseError(name + ": " + msg);
    }
    return RgbImage(static_cast<int>(img.width), static_cast<int>(img.height), std::move(pixels));
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

extern "C" inline void domgap_jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Only trivially destructible objects live between setjmp and longjmp.
inline bool decode_jpeg_raw(const unsigned char* data, std::size_t size, std::uint8_t* out,
                            std::size_t out_size, int* width, int* height, char* message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = domgap_jpeg_error_exit;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    *width = static_cast<int>(cinfo.output_width);
    *height = static_cast<int>(cinfo.output_height);
    const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * 3;
    if (out == nullptr || stride * cinfo.output_height > out_size) {
        jpeg_destroy_decompress(&cinfo);
        return true;  // caller re-invokes with a buffer of the reported size
    }
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out + stride * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

inline RgbImage decode_jpeg(const std::vector<unsigned char>& bytes, const std::string& name) {
    char message[JMSG_LENGTH_MAX] = {};
    int w = 0, h = 0;
    if (!decode_jpeg_raw(bytes.data(), bytes.size(), nullptr, 0, &w, &h, message))
        throw ParseError(name + ": " + message);
    if (w < 1 || h < 1) throw ParseError(name + ": empty JPEG");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w) * h * 3);
    if (!decode_jpeg_raw(bytes.data(), bytes.size(), pixels.data(), pixels.size(), &w, &h, message))
        throw ParseError(name + ": " + message);
    return RgbImage(w, h, std::move(pixels));
}

inline bool encode_jpeg_raw(const char* path, const std::uint8_t* pixels, int width, int height,
                            int quality, char* message) {
    std::FILE* file = std::fopen(path, "wb");
    if (!file) {
        std::strncpy(message, "cannot open output file", JMSG_LENGTH_MAX);
        return false;
    }
    jpeg_compress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = domgap_jpeg_error_exit;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_compress(&cinfo);
        std::fclose(file);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, file);
    cinfo.image_width = static_cast<JDIMENSION>(width);
    cinfo.image_height = static_cast<JDIMENSION>(height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    const std::size_t stride = static_cast<std::size_t>(width) * 3;
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<std::uint8_t*>(pixels) + stride * cinfo.next_scanline;
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return std::fclose(file) == 0;
}

}  // namespace detail

/// Decodes a PNG or JPEG file (detected from its signature) to 8-bit RGB.
/// Gray, palette, 16-bit and alpha PNGs are converted by libpng.
inline RgbImage read_image(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    if (detail::is_png(bytes)) return detail::decode_png(bytes, path.string());
    if (detail::is_jpeg(bytes)) return detail::decode_jpeg(bytes, path.string());
    throw ParseError(path.string() + ": unsupported image format (expected PNG or JPEG)");
}

inline void write_png(const std::filesystem::path& path, const RgbImage& image) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.pixels().data(), 0,
                                 nullptr))
        throw IoError(path.string() + ": " + img.message);
}

inline void write_jpeg(const std::filesystem::path& path, const RgbImage& image, int quality = 95) {
    char message[JMSG_LENGTH_MAX] = {};
    if (!detail::encode_jpeg_raw(path.string().c_str(), image.pixels().data(), image.width(),
                                 image.height(), quality, message))
        throw IoError(path.string() + ": " + message);
}

}  // namespace domgap
