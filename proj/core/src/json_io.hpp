#pragma once

// nlohmann/json adapters shared by the model file and experiment config code.

#include "kaelspi/kae.hpp"
#include "kaelspi/numkit.hpp"

#include "json.hpp"

namespace kaelspi {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

void to_json(Json& j, const LossConfig& c);
void from_json(const Json& j, LossConfig& c);
void to_json(Json& j, const KaeHyperparams& h);
void from_json(const Json& j, KaeHyperparams& h);

}  // namespace kaelspi
