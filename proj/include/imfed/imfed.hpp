#pragma once

#include "imfed/numerics.hpp"
#include "imfed/data.hpp"
#include "imfed/classifier.hpp"
#include "imfed/bank.hpp"
#include "imfed/transition.hpp"
#include "imfed/metrics.hpp"
#include "imfed/federation.hpp"
#include "imfed/io.hpp"
#include "imfed/experiment.hpp"
