#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "contalign/image_io.hpp"
#include "contalign/raster.hpp"

namespace contalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command line; args[0] is the subcommand. Machine output goes to
/// `out`, diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

/// Blue = source, green = target, red = aligned, each scaled to 0-255.
io::RgbImage overlay_image(const ContourImage& source, const ContourImage& target, const ContourImage& aligned);
void emit_overlay(const ContourImage& source, const ContourImage& target, const ContourImage& aligned,
                  const std::filesystem::path& path);

/// Small versions of the acceptance property checks; returns the failure count.
int run_selftest(std::ostream& out);

/// $CONTALIGN_DATA_DIR when set, else the working directory.
std::filesystem::path data_dir();

/// Runs fn(0..n-1) on up to `jobs` threads; rethrows the lowest-index failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace contalign::cli
