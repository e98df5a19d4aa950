#include "mseva/model/text_backend.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "json.hpp"
#include "mseva/common/error.hpp"
#include "mseva/common/fs.hpp"

namespace mseva::model {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (c >= 0x80 || std::isalnum(c)) {
      current.push_back(static_cast<char>(c >= 0x80 ? c : std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Mat HashingTextBackend::embed(const std::string& text) const {
  auto tokens = tokenize(text);
  if (static_cast<int>(tokens.size()) > max_tokens_) tokens.resize(static_cast<std::size_t>(max_tokens_));
  Mat out(static_cast<Eigen::Index>(tokens.size()), dim_);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::uint64_t state = fnv1a(tokens[t]);
    for (int d = 0; d < dim_; ++d) {
      // uniform in [-1, 1) from the top 53 bits
      const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      out(static_cast<Eigen::Index>(t), d) = 2.0 * u - 1.0;
    }
  }
  return out;
}

Mat CommandTextBackend::embed(const std::string& text) const {
  const auto input = std::filesystem::temp_directory_path() /
                     ("mseva-text-" + std::to_string(::getpid()) + "-" + sha256_hex(text).substr(0, 12));
  write_file_atomic(input, text);
  const std::string cmd = "'" + command_ + "' " + std::to_string(dim_) + " < '" + input.string() + "'";
  std::string output;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw Error(ErrorCode::BackendFailure, "cannot launch " + command_);
  std::array<char, 4096> buf{};
  for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0;) output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  std::filesystem::remove(input);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::BackendFailure, command_ + " failed");
  }
  try {
    const auto j = nlohmann::json::parse(output);
    Mat out(static_cast<Eigen::Index>(j.size()), dim_);
    for (std::size_t r = 0; r < j.size(); ++r) {
      if (j[r].size() != static_cast<std::size_t>(dim_)) throw Error(ErrorCode::BackendFailure, "wrong embedding dim");
      for (int c = 0; c < dim_; ++c) out(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendFailure, std::string("bad embedding output: ") + e.what());
  }
}

std::unique_ptr<TextBackend> make_text_backend(const std::string& spec, int dim) {
  if (spec == "hash" || spec == "stub") return std::make_unique<HashingTextBackend>(dim);
  if (spec.rfind("command:", 0) == 0) return std::make_unique<CommandTextBackend>(spec.substr(8), dim);
  throw Error(ErrorCode::InvalidConfig, "unknown text backend '" + spec + "'");
}

}  // namespace mseva::model
