#ifndef LHSR_PARAMS_IO_HPP
#define LHSR_PARAMS_IO_HPP

#include <filesystem>
#include <string>

#include "lhsr/hsp.hpp"
#include "lhsr/lsp.hpp"

namespace lhsr {

// Binary layouts are documented in docs/formats.md.  All integers are
// little-endian, weights are little-endian IEEE-754 doubles.

void save_params(const std::filesystem::path& path, const LspParams& lsp,
                 const HspParams& hsp);
std::pair<LspParams, HspParams> load_params(const std::filesystem::path& path);

void save_kernel(const std::filesystem::path& path, const ConvSpec& kernel, int scale);
ConvSpec load_kernel(const std::filesystem::path& path, int* scaleOut = nullptr);

struct Checkpoint {
    std::uint64_t iteration = 0;
    std::string rngState;     // serialized mt19937_64 stream state
    std::string configEcho;   // human-readable config dump
    LspParams lsp;
    HspParams hsp;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Write-temp-then-rename; no partial files on failure.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

} // namespace lhsr

#endif
