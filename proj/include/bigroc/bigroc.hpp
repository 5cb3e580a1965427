#pragma once

#include "bigroc/classifier.hpp"
#include "bigroc/error.hpp"
#include "bigroc/grad_check.hpp"
#include "bigroc/image_batch.hpp"
#include "bigroc/interp.hpp"
#include "bigroc/io/fingerprint.hpp"
#include "bigroc/io/manifest.hpp"
#include "bigroc/io/png.hpp"
#include "bigroc/label_stats.hpp"
#include "bigroc/metrics.hpp"
#include "bigroc/pgd.hpp"
#include "bigroc/pipeline.hpp"
#include "bigroc/refiner.hpp"
#include "bigroc/run_config.hpp"
#include "bigroc/threat_model.hpp"
#include "bigroc/trainer.hpp"
