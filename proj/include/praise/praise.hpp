#pragma once

#include "praise/config.hpp"
#include "praise/errors.hpp"
#include "praise/gradcheck.hpp"
#include "praise/nn.hpp"
#include "praise/policy.hpp"
#include "praise/ppo.hpp"
#include "praise/prompts.hpp"
#include "praise/rewards.hpp"
#include "praise/rng.hpp"
#include "praise/scoring.hpp"
#include "praise/search_env.hpp"
#include "praise/text.hpp"
#include "praise/trainer.hpp"
#include "praise/trajectory.hpp"
