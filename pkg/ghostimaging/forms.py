from django import forms

from .frames import Displacement, Region
from .registration import SearchWindow

OBJECT_KIND_CHOICES = [
    ('none', 'No object'),
    ('wire_curl', 'Curled wire'),
    ('double_slit', 'Double slit'),
    ('disk', 'Opaque disk'),
    ('custom', 'Custom PGM mask'),
]

REFERENCE_ARM_CHOICES = [
    (2, 'Arm 2'),
    (3, 'Arm 3'),
]


class RegionField(forms.Field):
    """A region written as ``x0,y0,width,height``."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        try:
            return Region.parse(value)
        except (ValueError, IndexError) as exc:
            raise forms.ValidationError(f'Enter a region as x0,y0,width,height ({exc}).')


class DisplacementField(forms.Field):
    """A displacement written as ``dx,dy``."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        try:
            return Displacement.parse(value)
        except ValueError as exc:
            raise forms.ValidationError(f'Enter a displacement as dx,dy ({exc}).')


class SearchWindowField(forms.Field):
    """A search window written as ``radius`` or ``dx_min,dx_max,dy_min,dy_max``."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        try:
            return SearchWindow.parse(value)
        except (ValueError, TypeError) as exc:
            raise forms.ValidationError(f'Enter a search window as radius or dx_min,dx_max,dy_min,dy_max ({exc}).')


class FlagField(forms.Field):
    """A boolean written as true/false, yes/no, on/off or 1/0."""
    TRUE = {'true', 'yes', 'on', '1'}
    FALSE = {'false', 'no', 'off', '0'}

    def to_python(self, value):
        if value in self.empty_values:
            return None
        text = str(value).strip().lower()
        if text in self.TRUE:
            return True
        if text in self.FALSE:
            return False
        raise forms.ValidationError('Enter true or false.')


class PipelineConfigForm(forms.Form):
    """Schema of a pipeline configuration file; every key is a field."""
    grid_width = forms.IntegerField(min_value=1)
    grid_height = forms.IntegerField(min_value=1)
    coh_radius = forms.FloatField(min_value=0)
    mean_intensity = forms.FloatField(min_value=0)
    n_frames = forms.IntegerField(min_value=1)
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    quantization_gain = forms.FloatField(required=False, min_value=0)

    object_kind = forms.ChoiceField(choices=OBJECT_KIND_CHOICES, required=False)
    object_thickness = forms.FloatField(required=False, min_value=0)
    object_loops = forms.IntegerField(required=False, min_value=1)
    object_loop_radius = forms.FloatField(required=False, min_value=0)
    object_lead_length = forms.FloatField(required=False, min_value=0)
    object_soft_edge = forms.FloatField(required=False, min_value=0)
    object_radius = forms.FloatField(required=False, min_value=0)
    object_slit_width = forms.IntegerField(required=False, min_value=1)
    object_slit_separation = forms.IntegerField(required=False, min_value=1)
    object_path = forms.CharField(required=False)

    anchor_region = RegionField(required=False)
    moving2_origin = RegionField(required=False)
    moving3_origin = RegionField(required=False)
    search = SearchWindowField(required=False)
    test_region = RegionField(required=False)
    back_region = RegionField(required=False)
    obj_region = RegionField(required=False)
    reference_arm = forms.TypedChoiceField(choices=REFERENCE_ARM_CHOICES, coerce=int, required=False,
                                           empty_value=None)

    output_dir = forms.CharField(required=False)
    threads = forms.IntegerField(required=False, min_value=1)
    histogram_bins = forms.IntegerField(required=False, min_value=1)
    study_window = forms.IntegerField(required=False, min_value=3)

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        for number in (1, 2, 3):
            self.fields[f'arm{number}_gain'] = forms.FloatField(required=False, min_value=0)
            self.fields[f'arm{number}_offset'] = DisplacementField(required=False)
            self.fields[f'arm{number}_decorrelation'] = forms.FloatField(required=False, min_value=0, max_value=1)
            self.fields[f'arm{number}_read_noise'] = forms.FloatField(required=False, min_value=0)
            self.fields[f'arm{number}_shot_noise'] = FlagField(required=False)

    def clean_coh_radius(self):
        value = self.cleaned_data.get('coh_radius')
        if value is not None and value <= 0:
            raise forms.ValidationError('Speckle radius must be positive.')
        return value

    def clean_mean_intensity(self):
        value = self.cleaned_data.get('mean_intensity')
        if value is not None and value <= 0:
            raise forms.ValidationError('Mean intensity must be positive.')
        return value

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('object_kind') == 'custom' and not cleaned_data.get('object_path'):
            self.add_error('object_path', 'A custom object needs object_path.')
        return cleaned_data
