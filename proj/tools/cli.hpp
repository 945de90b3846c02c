#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdcert/bounds.hpp"
#include "sdcert/lmi.hpp"
#include "sdcert/models.hpp"

namespace sdcert::cli {

enum ExitCode : int { kOk = 0, kNegative = 1, kInfeasible = 2, kInputError = 3 };

/// Runs one command; args excludes the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

nlohmann::json bound_to_json(const SamplingBoundResult& r);

struct VerifyOutcome {
    std::string family;
    MarginSet margins;
    bool pass = false;
    /// Bound implied by the certificate, when it carries enough constants.
    std::optional<SamplingBoundResult> bound;
    nlohmann::json bound_constants;
};

/// Chooses the LMI family from the model type and the certificate's fields.
VerifyOutcome verify_certificate(const Model& model, const LmiCertificate& cert, double tol);

/// (q, τ̂(q)) over the admissible q interval of a bound recorded in a report.
std::vector<std::pair<double, double>> tau_curve(const nlohmann::json& bound, std::size_t points = 200);

} // namespace sdcert::cli
