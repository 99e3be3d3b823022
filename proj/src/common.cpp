#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <fstream>
#include <memory>

#include "xp/digest.hpp"
#include "xp/errors.hpp"
#include "xp/value.hpp"

namespace xp {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::UnresolvedAbstractTask: return "UnresolvedAbstractTask";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::DuplicateTask: return "DuplicateTask";
    case ErrorCode::DuplicateImplementationVp: return "DuplicateImplementationVp";
    case ErrorCode::DuplicateValue: return "DuplicateValue";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::InvalidTask: return "InvalidTask";
    case ErrorCode::InvalidAssignment: return "InvalidAssignment";
    case ErrorCode::MissingDigest: return "MissingDigest";
    case ErrorCode::SpaceTooLarge: return "SpaceTooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidCharacter: return "InvalidCharacter";
    case ErrorCode::UnterminatedString: return "UnterminatedString";
    case ErrorCode::InvalidNumber: return "InvalidNumber";
    case ErrorCode::UnexpectedToken: return "UnexpectedToken";
    case ErrorCode::UnexpectedEnd: return "UnexpectedEnd";
    case ErrorCode::ReservedWord: return "ReservedWord";
    case ErrorCode::DuplicateParam: return "DuplicateParam";
    case ErrorCode::DuplicateVp: return "DuplicateVp";
    case ErrorCode::DuplicateMetric: return "DuplicateMetric";
    case ErrorCode::UndeclaredMetric: return "UndeclaredMetric";
    case ErrorCode::NonPositiveCost: return "NonPositiveCost";
    case ErrorCode::NegativeBudget: return "NegativeBudget";
    case ErrorCode::InvalidCheckpoint: return "InvalidCheckpoint";
    case ErrorCode::InvalidMonitor: return "InvalidMonitor";
    case ErrorCode::InvalidStrategy: return "InvalidStrategy";
    case ErrorCode::InvalidBudget: return "InvalidBudget";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::EmptyRemaining: return "EmptyRemaining";
    case ErrorCode::StaleResponse: return "StaleResponse";
    case ErrorCode::UnknownConfig: return "UnknownConfig";
    case ErrorCode::UnknownPrompt: return "UnknownPrompt";
    case ErrorCode::RoleMismatch: return "RoleMismatch";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::NoContext: return "NoContext";
    case ErrorCode::DuplicateRun: return "DuplicateRun";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::SignatureMismatch: return "SignatureMismatch";
    case ErrorCode::MalformedResult: return "MalformedResult";
    case ErrorCode::ProcessError: return "ProcessError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnknownExperiment: return "UnknownExperiment";
  }
  return "Unknown";
}

std::string format_number(double x) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) return std::to_string(x);
  return std::string(buf.data(), end);
}

std::string to_display(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  return std::get<std::string>(v);
}

json to_json(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

Value value_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw XpError(ErrorCode::InvalidAssignment, j.dump(), "value must be a number or a string");
}

namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw XpError(ErrorCode::IoError, "sha256", "cannot initialise SHA-256");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[md[i] >> 4]);
      out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw XpError(ErrorCode::IoError, path.string(), "cannot read " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

}  // namespace xp
