"""
Plan vision token budgets from media metadata.
Usage:
    python -m toolkit budget image --width 1920 --height 1080
    python -m toolkit budget video --duration 4 --width 448 --height 448
"""

from toolkit.commands import CurationCommand
from toolkit.conf import curation_setting
from toolkit.jsonl import render_json
from vision_budget.planning import BudgetConfig, plan_image, plan_video
from vision_budget.serializers import ImagePlanSerializer, VideoPlanSerializer

CONFIG_OPTIONS = (
    ('patch', 'PATCH', int),
    ('merge', 'MERGE', int),
    ('image_cap', 'IMAGE_CAP', int),
    ('frame_min', 'FRAME_MIN', int),
    ('frame_max', 'FRAME_MAX', int),
    ('video_cap', 'VIDEO_CAP', int),
    ('tick', 'TICK', float),
    ('base_fps', 'BASE_FPS', float),
)


class Command(CurationCommand):
    help = 'Plan native-resolution token budgets for an image or a video'

    def add_arguments(self, parser):
        media = parser.add_subparsers(dest='media', required=True)
        image = media.add_parser('image', help='Plan one image')
        video = media.add_parser('video', help='Plan one video from its metadata')
        video.add_argument('--duration', type=float, required=True, help='Duration in seconds')

        for sub in (image, video):
            sub.add_argument('--width', type=int, required=True)
            sub.add_argument('--height', type=int, required=True)
            sub.add_argument('--output', help='Write the plan here instead of stdout')
            for option, _, kind in CONFIG_OPTIONS:
                sub.add_argument(f"--{option.replace('_', '-')}", type=kind, default=None)

    def handle(self, *args, **options):
        cfg = BudgetConfig(**{
            option: curation_setting('BUDGET', key) if options[option] is None else options[option]
            for option, key, _ in CONFIG_OPTIONS
        })
        if options['media'] == 'image':
            data = ImagePlanSerializer(plan_image(options['width'], options['height'], cfg)).data
        else:
            plan = plan_video(options['duration'], options['width'], options['height'], cfg)
            data = VideoPlanSerializer(plan).data

        payload = render_json(data) + b'\n'
        if options['output']:
            with open(options['output'], 'wb') as f:
                f.write(payload)
        else:
            self.stdout.write(payload.decode('utf-8'), ending='')
