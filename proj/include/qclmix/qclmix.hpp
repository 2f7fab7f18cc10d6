#pragma once

// Umbrella header for the qclmix library.

#include "qclmix/common.hpp"
#include "qclmix/data.hpp"
#include "qclmix/datagen.hpp"
#include "qclmix/gradcheck.hpp"
#include "qclmix/gradsuite.hpp"
#include "qclmix/losses.hpp"
#include "qclmix/metrics.hpp"
#include "qclmix/mixup.hpp"
#include "qclmix/model.hpp"
#include "qclmix/optimizer.hpp"
#include "qclmix/rng.hpp"
#include "qclmix/stats.hpp"
#include "qclmix/tensor.hpp"
#include "qclmix/training.hpp"
