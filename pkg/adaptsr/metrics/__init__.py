from adaptsr.metrics.models import PSNR_CAP, MetricConfig
from adaptsr.metrics.quality import psnr, psnr_per_image, rgb_to_y, ssim, ssim_per_image
