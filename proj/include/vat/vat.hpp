#pragma once

#include "vat/commands.hpp"
#include "vat/correlation.hpp"
#include "vat/dataset.hpp"
#include "vat/elicitation.hpp"
#include "vat/error.hpp"
#include "vat/evidence.hpp"
#include "vat/figures.hpp"
#include "vat/io.hpp"
#include "vat/metrics.hpp"
#include "vat/mock_endpoint.hpp"
#include "vat/oracles.hpp"
#include "vat/parallel.hpp"
#include "vat/robustness.hpp"
#include "vat/svg.hpp"
#include "vat/synthetic.hpp"
#include "vat/taxonomy.hpp"
