#pragma once

#include "textcast/core.hpp"
#include "textcast/series.hpp"
#include "textcast/corpus.hpp"
#include "textcast/encode.hpp"
#include "textcast/linmod.hpp"
#include "textcast/forest.hpp"
#include "textcast/neural.hpp"
#include "textcast/pipeline.hpp"
#include "textcast/interpret.hpp"
#include "textcast/synth.hpp"
#include "textcast/config.hpp"
#include "textcast/experiment.hpp"
