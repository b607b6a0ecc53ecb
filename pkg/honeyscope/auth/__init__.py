from honeyscope.auth.features import (
    FEATURE_NAMES, AuthFeatures, extract_features, features_from_annotations, features_from_records,
)
from honeyscope.auth.model import (
    AuthConfig, AuthModel, train_auth, authenticate, save_auth_model, load_auth_model,
)
from honeyscope.auth.checks import (
    DilutionResult, BlendResult, dilution_check, distribution_compare, closest_profile, blend_check,
)
from honeyscope.auth.profiles import HoneyProfile, ProfileManager
