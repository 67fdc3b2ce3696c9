#pragma once

#include <filesystem>
#include <fstream>
#include <system_error>

#include "igsc/error.hpp"

namespace igsc::detail {

/// Writes through `emit` into a sibling temp file and renames it over `path`,
/// so a failed write never leaves a truncated file behind.
template <typename Emit>
void write_file_atomically(const std::filesystem::path& path, Emit&& emit) {
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        try {
            emit(out);
        } catch (...) {
            out.close();
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw;
        }
        out.flush();
        if (!out) {
            out.close();
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw IoError("write failed for " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

}  // namespace igsc::detail
