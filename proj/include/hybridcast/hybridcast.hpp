#pragma once

#include <hybridcast/analysis.hpp>
#include <hybridcast/csv.hpp>
#include <hybridcast/error.hpp>
#include <hybridcast/gbtree.hpp>
#include <hybridcast/lstm.hpp>
#include <hybridcast/market_data.hpp>
#include <hybridcast/metrics.hpp>
#include <hybridcast/numkernel.hpp>
#include <hybridcast/pipeline.hpp>
#include <hybridcast/serialize.hpp>
