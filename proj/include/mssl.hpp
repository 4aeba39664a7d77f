#pragma once

#include "mssl/adam.hpp"
#include "mssl/config.hpp"
#include "mssl/dataset.hpp"
#include "mssl/error.hpp"
#include "mssl/evaluation.hpp"
#include "mssl/feature_io.hpp"
#include "mssl/manifest.hpp"
#include "mssl/model.hpp"
#include "mssl/model_io.hpp"
#include "mssl/mv_ratio.hpp"
#include "mssl/nn/checkpoint.hpp"
#include "mssl/nn/grad_check.hpp"
#include "mssl/objectives.hpp"
#include "mssl/pipeline.hpp"
#include "mssl/rng.hpp"
#include "mssl/similarity.hpp"
#include "mssl/synthetic.hpp"
#include "mssl/text_encoder.hpp"
#include "mssl/trainer.hpp"
#include "mssl/video_encoder.hpp"
