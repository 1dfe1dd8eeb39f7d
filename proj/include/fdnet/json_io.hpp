#pragma once

// JSON views of library results. Keys keep insertion order so output is
// byte-stable.

#include "fdnet/avgeff.hpp"
#include "fdnet/linmodel.hpp"
#include "fdnet/logitmodel.hpp"
#include "fdnet/netcore.hpp"
#include "fdnet/result.hpp"
#include "fdnet/simkit.hpp"

#include <json.hpp>

namespace fdnet::json {

using Json = nlohmann::ordered_json;

Json to_json(const EstimateResult& r);
Json to_json(const lin::VarianceDecomposition& v);
Json to_json(const logit::MomentFunction& phi);
/// Patterns as arrays of edge indices, grouped under their kind.
Json to_json(const std::vector<SubnetworkPattern>& patterns);
Json to_json(const ape::CertificationReport& report);
Json to_json(const sim::McSummary& summary);
Json to_json(const linalg::Vector& v);

}  // namespace fdnet::json
