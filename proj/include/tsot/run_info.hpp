// tsot/run_info.hpp

// Copyright 2026  tsot-fnt authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Output-directory bookkeeping: a config echo and git-style content hashes
// (SHA-1 over "blob <size>\0<bytes>") of every input file.

#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace tsot {

inline std::string sha1_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha1: digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::string git_blob_hash(const std::string& bytes) {
  std::string obj = "blob " + std::to_string(bytes.size());
  obj.push_back('\0');
  return sha1_hex(obj + bytes);
}

/// Writes <dir>/config.json and <dir>/inputs.json. Directories among the
/// inputs contribute every regular file below them, in path order.
inline void write_run_info(const std::string& dir, const std::string& command,
                           const nlohmann::json& config, const std::vector<std::string>& inputs) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (in.empty()) continue;
    if (fs::is_directory(in)) {
      std::vector<std::string> sub;
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file()) sub.push_back(e.path().string());
      std::sort(sub.begin(), sub.end());
      files.insert(files.end(), sub.begin(), sub.end());
    } else {
      files.push_back(in);
    }
  }
  nlohmann::json hashes = nlohmann::json::object();
  std::string combined;
  for (const auto& f : files) {
    std::string h = git_blob_hash(read_file(f));
    hashes[f] = h;
    combined += h + "  " + f + "\n";
  }
  nlohmann::json echo = {{"command", command}, {"config", config}};
  std::ofstream(dir + "/config.json") << echo.dump(2) << '\n';
  nlohmann::json info = {{"files", hashes}, {"content_hash", git_blob_hash(combined)}};
  std::ofstream(dir + "/inputs.json") << info.dump(2) << '\n';
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace tsot
