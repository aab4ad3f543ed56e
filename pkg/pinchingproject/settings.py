"""
Django settings for pinchingproject project.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "django-insecure-pinchnet-local-development-key")

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get("DJANGO_DEBUG", "1") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    # Third-party
    "rest_framework",
    # Developer-created apps
    "pinchnet",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "pinchingproject.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "pinchingproject.wsgi.application"


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.2/howto/static-files/

STATIC_URL = "static/"

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

REST_FRAMEWORK = {
    "DEFAULT_RENDERER_CLASSES": ["rest_framework.renderers.JSONRenderer"],
}


# Optimizer defaults. Keys match the fields of the config serializers; a run config
# file or command-line option overrides any of them.

PINCHNET = {
    "SCENARIO": {
        "B": 1,
        "R": 1,
        "K": 4,
        "N": 8,
        "M": 6,
        "L": 64,
        "D": 30.0,
        "S": 30.0,
        "H_b": 5.0,
        "C": 10.0,
        "delta_wg": 0.7,
        "P_max": 10.0,
        "P_C": 5.0,
        "sigma2": 1e-9,
        "f_c": 6e9,
        "n_eff": 1.4,
        "zeta": 0.0046,
        "kappa": 10**0.3,
        "alpha_pl": 2.8,
        "beta0": 1e-2,
        "delta_min": 0.1,
        "seed": 0,
        "steering": "literal",
    },
    "MODEL": {
        **{f"G{i}": 2 for i in range(1, 10)},
        "hidden_chan": 64,
        "hidden_beam": 64,
        "hidden_assoc": 64,
        "heads": 4,
        "tau": 1.0,
        "message_passing": True,
        "residual": True,
        "cfl_stage1": True,
        "cfl_stage2": True,
        "cfl_stage3": True,
        "no_ris": False,
        "fixed_pa": False,
        "fixed_pa_spread": False,
    },
    "TRAINING": {
        "objective": "sr",
        "epochs": 50,
        "batch_size": 128,
        "lr": 5e-5,
        "milestones": [20, 35],
        "gamma": 0.5,
        "patience": 10,
        "min_delta": 0.0,
        "n_samples": 1000,
        "split": [8, 1, 1],
        "seed": 0,
        "tau_anneal": False,
        "tau_final": 0.3,
    },
    "THREADS": max(1, int(os.environ.get("PINCHNET_THREADS", "1"))),
    "ARTIFACT_DIR": Path(os.environ.get("PINCHNET_ARTIFACT_DIR", BASE_DIR / "artifacts")),
}


LOG_DIR = BASE_DIR / "logs"
LOG_DIR.mkdir(exist_ok=True)

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,  # Keep Django's default logging
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {name} {message}",
            "style": "{",
        },
        "simple": {
            "format": "[{levelname}] {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
            "level": "INFO",
        },
        "file": {
            "class": "logging.FileHandler",
            "filename": LOG_DIR / "project.log",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "INFO",
            "propagate": True,
        },
        "pinchnet": {
            "handlers": ["file", "console"],
            "level": "DEBUG",
            "propagate": False,
        },
    },
}
