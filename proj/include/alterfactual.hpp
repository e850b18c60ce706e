#pragma once

#include "alterfactual/errors.hpp"
#include "alterfactual/textcore.hpp"
#include "alterfactual/http.hpp"
#include "alterfactual/oracles.hpp"
#include "alterfactual/negation.hpp"
#include "alterfactual/cache.hpp"
#include "alterfactual/opposites.hpp"
#include "alterfactual/generator.hpp"
#include "alterfactual/evaluation.hpp"
#include "alterfactual/json_io.hpp"
#include "alterfactual/config.hpp"
#include "alterfactual/service.hpp"
